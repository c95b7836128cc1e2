use alloc::string::String;

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("variable index {index} out of range for input dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },

    #[error("variable {variable}: {reason}")]
    RoleMismatch { variable: usize, reason: &'static str },

    #[error("hard-mode tree map has no derivative; switch to soft mode")]
    NotDifferentiable,

    #[error("value {level} is not a declared level of variable {variable}")]
    UnknownLevel { variable: usize, level: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("factorization failed after jitter escalation (smallest eigenvalue estimate {min_eigenvalue:e})")]
    Factorization { min_eigenvalue: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
