use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("sampling failed after {attempts} attempts: {reason}")]
    SamplingFailed { attempts: usize, reason: String },

    #[error("no examples could be generated: {0}")]
    NoExamples(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported {kind} format version {found} (this build reads major version {supported})")]
    UnsupportedVersion {
        kind: String,
        found: String,
        supported: u32,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
