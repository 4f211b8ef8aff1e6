use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A worker or critic endpoint kept failing after all retries.
    #[error("environment error after {attempts} attempt(s): {message}")]
    Environment { message: String, attempts: u32 },

    /// The endpoint answered but the body could not be understood.
    #[error("malformed reply: {message}")]
    Parse { message: String, raw: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("dataset record {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("corrupt file {}: {message}", file.display())]
    Corrupt { file: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
