//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, propagation, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical self-check failed (quadrature doubling, degenerate
    /// spectrum, reference self-consistency).
    #[error("accuracy: {0}")]
    Accuracy(String),

    /// Malformed JSON in a model, control, or state document.
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),

    /// File system failure while reading or writing artifacts.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn accuracy(msg: impl Into<String>) -> Self {
        Error::Accuracy(msg.into())
    }
}
