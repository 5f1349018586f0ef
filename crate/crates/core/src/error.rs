//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or structural invariant violated (mismatched dims, bad spans,
    /// duplicate ids, out-of-range k, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// Numeric-domain failure: NaN/Inf where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Index out of the valid range (vocab ids, ranks, ...).
    #[error("index error: {0}")]
    Index(String),

    /// Training loss became non-finite.
    #[error("divergence: {0}")]
    Divergence(String),

    /// Input data failed validation (dangling positives, empty dataset, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A line of an input file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Command-line / configuration misuse (missing artifact, bad flag value,
    /// mismatched checkpoint-cache pair, held output lock).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for usage/validation problems the caller can fix,
    /// 1 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Validation(_) | Error::Parse { .. } => 2,
            _ => 1,
        }
    }

    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
