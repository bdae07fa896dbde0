//! Error type shared by all pipeline stages.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter or configuration value.
    #[error("config: {0}")]
    Config(String),
    /// Input value outside its documented domain.
    #[error("domain: {0}")]
    Domain(String),
    /// Mismatched dimensions between two structures.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    /// Malformed file contents.
    #[error("format error in {}: byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    /// Non-finite or otherwise invalid numeric value.
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("io: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage/config, 2 data/format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Domain(_) | Error::Shape { .. } | Error::Format { .. } | Error::Io { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}
