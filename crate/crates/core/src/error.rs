use thiserror::Error;

/// Errors surfaced by the motion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or length disagreement; the message names the offending axes.
    #[error("dimension error: {0}")]
    Dim(String),

    /// An integer index (code, joint, target class) out of range.
    #[error("index error: {0}")]
    Index(String),

    /// Invalid configuration (bad partition, bad rate, missing field).
    #[error("configuration error: {0}")]
    Config(String),

    /// NaN/Inf encountered, or a numeric routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed file: bad magic, version, or truncation.
    #[error("format error: {0}")]
    Format(String),

    /// Checkpoint incompatible with the requested operation.
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }
    pub fn index(msg: impl Into<String>) -> Self {
        Error::Index(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
