use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The adapter misbehaved: bad exit status, unparsable output, spawn failure.
    #[error("adapter error: {message}")]
    Adapter { message: String, output: String },

    #[error("profiling failed on test {test}: {message}")]
    Profiling { test: String, message: String },

    #[error("localization error: {0}")]
    Localization(String),

    #[error("generation error: {message}")]
    Generation { message: String, output: String },

    #[error("pool load error: {0}")]
    PoolLoad(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("benchmark error: {0}")]
    Bench(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}
