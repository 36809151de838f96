use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("degenerate likelihood: every particle received zero weight")]
    DegenerateLikelihood,

    #[error("no injection histogram for wiper level {0}")]
    MissingHistogram(u8),

    #[error("undefined rate: {0} class is empty")]
    UndefinedRate(&'static str),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("radial scan has no gates")]
    EmptyScan,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
