use crate::subspace::Subspace;
use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is numerically singular: {reason}")]
    Singular {
        reason: String,
        /// Approximate null directions of the offending matrix.
        null_space: Option<Subspace>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("input is not stationary: residual {residual:.3e} exceeds {bound:.3e}")]
    NotExtremal { residual: f64, bound: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
