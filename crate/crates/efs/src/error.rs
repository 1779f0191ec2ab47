use thiserror::Error;

pub type Result<T, E = IoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot open `{0}`: {1}")]
    Open(String, #[source] std::io::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Core(#[from] efs_core::Error),

    #[error("invalid configuration: {0}")]
    Config(String),
}
