use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the detection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown class {name:?} at line {line}")]
    UnknownClass { line: usize, name: String },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("fingerprint mismatch: checkpoint was built for a different {what}")]
    FingerprintMismatch { what: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {msg}")]
    Wav { path: PathBuf, msg: String },

    #[error("corrupt container {path}: {msg}")]
    Container { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
