//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by parsing, validation, and model handling.
///
/// Contract violations that can only arise from incorrect calling code
/// (an item compared against itself, a probability outside `[0, 1]`) panic
/// instead; every error that user-supplied data can trigger goes through
/// this type so callers can report it with context.
#[derive(Debug, Error)]
pub enum Error {
    /// A line of an input file failed to parse. Line numbers are 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Structurally valid input that violates a documented invariant.
    #[error("{0}")]
    InvalidData(String),

    /// A vector or matrix had the wrong dimension for the requested
    /// operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A model file could not be read back or failed validation.
    #[error("model file: {0}")]
    Model(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn data(message: impl Into<String>) -> Self {
        Error::InvalidData(message.into())
    }

    /// True when the error indicates malformed or inconsistent input rather
    /// than an environment failure. Used by the CLI to pick exit codes.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
