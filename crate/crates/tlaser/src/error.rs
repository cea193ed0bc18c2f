//! Crate-wide error type and result alias.

use std::path::PathBuf;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor operations, decompositions, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are not conformant for the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input is degenerate (e.g. an all-zero slice where a direction is required).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An iterative numerical kernel failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A binary or structured file could not be decoded.
    #[error("{}: parse error at byte {offset}: {message}", path.display())]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// One or more validation problems; every problem found is listed.
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    /// A manifest/config document is well-formed but inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
