use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config keys or column references.
    #[error("usage: {0}")]
    Usage(String),

    /// Input data that does not fit the declared schema.
    #[error("data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(featgp_core::Error),

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<featgp_core::Error> for CliError {
    fn from(e: featgp_core::Error) -> Self {
        use featgp_core::Error as E;
        match e {
            E::Factorization { .. } | E::NonFinite(_) | E::NotDifferentiable => CliError::Numerical(e),
            E::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}
