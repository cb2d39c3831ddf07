use std::path::PathBuf;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or unusable configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Integration of an oracle model diverged or produced a non-finite value.
    #[error("simulation error at step {step}: {message}")]
    Simulation { step: usize, message: String },

    /// Array dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A non-finite value appeared during network evaluation or training.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training produced a non-finite loss. Carries the last finite parameters.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, last_good: Box<crate::lstm::LstmParams> },

    /// A data file failed validation.
    #[error("failed to load {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Load { path: path.into(), message: message.into() }
    }

    /// Process exit code for this error: 1 usage, 2 data validation, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Shape(_) => 1,
            Error::Load { .. } | Error::Io { .. } | Error::Json { .. } => 2,
            Error::Simulation { .. } | Error::Numeric(_) | Error::NonFiniteLoss { .. } => 3,
        }
    }
}
