//! Crate-wide error type.
//!
//! Three failure families matter here: inputs that are malformed regardless
//! of state (`InvalidInput`), arguments outside the mathematical domain of an
//! otherwise fine object (`Domain`), and iterative schemes that ran out of
//! budget (`Numerical`). Callers that want to degrade gracefully (the CLI
//! turns per-row domain failures into null cells) match on the variant.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed argument: empty lists, negative weights, NaN atoms, a ratio
    /// parameter outside [0, 1] and similar.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Argument outside the domain of the transform being evaluated
    /// (pole of a generating function, `z` past the support bound, `theta`
    /// outside the admissible interval).
    #[error("domain error: {0}")]
    Domain(String),

    /// An iteration failed to converge within its budget, or a matrix
    /// factorization did not complete.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
