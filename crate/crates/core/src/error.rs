use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("goal sampling exhausted after {0} rejections")]
    SamplingExhausted(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("value iteration did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
