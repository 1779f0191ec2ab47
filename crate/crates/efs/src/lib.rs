//! File formats, configuration and the command-line front end around
//! `efs-core`.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod report;
pub mod transport;

pub use error::{IoError, Result};
