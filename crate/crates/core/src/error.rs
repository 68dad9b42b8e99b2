use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,

    #[error("series has no present values")]
    AllMissing,

    #[error("too short: {0}")]
    TooShort(String),

    #[error("non-finite value: {0}")]
    NonFinite(f64),

    #[error("context is empty")]
    EmptyContext,

    #[error("bad token id {0}")]
    BadToken(u32),

    #[error("input of length {len} exceeds model context length {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("malformed target: {0}")]
    MalformedTarget(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("future data leaked into context at origin {0}")]
    Leakage(i64),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for data problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
