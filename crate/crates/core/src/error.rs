use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical quantity was outside its domain (negative distance, etc.).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is inconsistent or infeasible.
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An allocation matrix violated the one-channel-per-link contract.
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    /// A joint action index was out of range.
    #[error("action index {index} out of range (joint action space has {count} entries)")]
    ActionOutOfRange { index: u64, count: u64 },

    /// The joint action space is too large to enumerate exhaustively.
    #[error("joint action space of {size} actions exceeds the enumeration guard of {limit}")]
    ActionSpaceTooLarge { size: u128, limit: u64 },

    /// I/O failure, tagged with the offending path.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A checkpoint or config file could not be parsed.
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
