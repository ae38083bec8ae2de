use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the simulation toolkit.
///
/// The variants map onto the CLI exit codes: configuration (2),
/// numerical (3) and estimation (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("numerical failure at t = {time} fs: {reason}")]
    Numerical { time: f64, reason: String },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn estimation(reason: impl Into<String>) -> Self {
        Error::Estimation(reason.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
