//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by matrix, solver, and model operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or emptiness violations (mismatched sample counts, empty matrices, bad k).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A matrix that must be positive definite is not, even after regularization.
    #[error("singular matrix: {context} (smallest eigenvalue {smallest_eigenvalue:.3e})")]
    Singular {
        context: String,
        smallest_eigenvalue: f64,
    },

    /// Invalid parameter values (out-of-range penalties, bad fractions, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A solver input carries no usable signal (zero cross matrix, collapsed direction).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An explicit caller contract was violated (e.g. non-unit-norm deflation weights).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid generator / experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Iterative training diverged.
    #[error("training diverged at epoch {epoch}: {context}")]
    Diverged { epoch: usize, context: String },

    /// File input/output failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed data file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
