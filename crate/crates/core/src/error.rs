use std::path::PathBuf;

use crate::ndmath::NdError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by every layer above the tensor substrate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Nd(#[from] NdError),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("goal {goal} is outside the support of {support}")]
    OutOfSupport { goal: String, support: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("{operation} is not supported by the {family} posterior")]
    Unsupported { operation: String, family: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
