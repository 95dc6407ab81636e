use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a precondition (wrong shape, empty signal, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// Checkpoint file is malformed, truncated, or version-incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    /// Dataset-level problem (bad manifest, missing files, bad WAV).
    #[error("data error: {0}")]
    Data(String),
    /// Training diverged (non-finite loss).
    #[error("training aborted: {0}")]
    Training(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
