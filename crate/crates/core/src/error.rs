use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode index: |m| = {m} exceeds n = {n}")]
    InvalidModeIndex { n: usize, m: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("underdetermined system: {rows} rows < {cols} unknowns ({detail})")]
    Underdetermined {
        rows: usize,
        cols: usize,
        detail: String,
    },

    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
