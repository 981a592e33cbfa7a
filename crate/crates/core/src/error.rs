use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Rejected configuration; `key` names the offending field.
    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    /// Two vectors or ensembles of incompatible dimension/size.
    #[error("dimension mismatch: {left} vs {right} in {context}")]
    DimensionMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    /// A numerical operation produced NaN/Inf. `context` carries step provenance.
    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    /// Precondition violation on an operation argument.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A verification diagnostic failed its stated tolerance.
    #[error("diagnostic failed: {0}")]
    DiagnosticFailed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid_config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
