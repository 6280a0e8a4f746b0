//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by sketch, bandwidth, federation, and simulation code.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough history/samples to perform the operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Sketches with mismatched columns or hash families cannot be combined.
    #[error("incompatible sketches: {0}")]
    IncompatibleSketch(String),

    /// A structured text input failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Configuration or file-level validation failed.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
