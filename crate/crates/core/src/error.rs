use alloc::string::String;

use thiserror::Error;

use crate::dsl::ParseError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-positive price {value} for asset `{asset}` at step {step}")]
    NonPositivePrice { asset: String, step: usize, value: f64 },

    #[error("malformed table: {0}")]
    Shape(String),

    #[error("insufficient history: step {t} is before lookback {lookback}")]
    InsufficientHistory { t: usize, lookback: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty factor set")]
    EmptyFactorSet,

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("factor pool is empty")]
    EmptyPool,

    #[error("dataset too short: need {needed} steps, have {have}")]
    DatasetTooShort { needed: usize, have: usize },

    #[error("no records left after truncation")]
    EmptyAfterTruncation,
}
