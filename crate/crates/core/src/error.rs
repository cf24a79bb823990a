use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `location` names the line (CSV) or byte offset (binary).
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// A documented precondition on the input does not hold.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("example-count mismatch: {left} vs {right}")]
    ExampleCountMismatch { left: usize, right: usize },

    #[error("rank-zero input: {0}")]
    RankZero(String),

    /// The value is mathematically undefined for this input (constant data, zero spectrum, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// Whether the error reflects numerical degeneracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankZero(_) | Error::Degenerate(_))
    }
}
