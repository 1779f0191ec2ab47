//! Evolutionary factor search over a closed factor-expression language.
//!
//! The crate is `no_std` with `alloc`: every type here is a pure in-memory
//! computation. File formats, the HTTP transport for remote generation and the
//! command line live in the `efs` companion crate.
//!
//! Layout:
//! - [`market`]: price tables, gross relative returns, base-100 normalized
//!   prices and fixed-length lookback windows.
//! - [`dsl`]: factor expression trees, their text grammar and the evaluator.
//! - [`seeds`]: the initial factor library and [`seeds::FactorRecord`].
//! - [`metrics`]: CW, SR, MDD, Spearman RankIC, RankICIR, recall/precision@N.
//! - [`portfolio`]: score aggregation, top-m selection, weighting, costs.
//! - [`generator`]: the generation contract, prompts, validation, the offline
//!   mutation/crossover engine and the retrying remote driver.
//! - [`evolution`]: the rolling search-and-backtest loop.
//! - [`aggregation`]: merging search records of independent runs.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` deliberately treats NaN as failing the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aggregation;
pub mod dsl;
pub mod error;
pub mod evolution;
pub mod generator;
pub mod market;
pub mod metrics;
pub mod portfolio;
pub mod seeds;

pub use error::{Error, Result};
