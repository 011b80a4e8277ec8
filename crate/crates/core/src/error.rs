use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::Degeneracy;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{what} out of bounds: {detail}")]
    Bounds { what: &'static str, detail: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error(transparent)]
    Degenerate(#[from] Degeneracy),

    #[error("no reliable background trajectories on the dominant path")]
    NoReliableBackground,

    #[error(
        "global background model underdetermined: {usable} of {total} frame pairs have at least 8 reliable trajectories"
    )]
    GlobalModelUnderdetermined { usable: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
