use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvxError {
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("seed mask is empty")]
    EmptySeed,
    #[error("no supervoxel overlaps the seed above the fit threshold")]
    NoSeedOverlap,
    #[error("mask is empty")]
    EmptyMask,
    #[error("configuration error: {0}")]
    Config(String),
}

impl SvxError {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        SvxError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SvxError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = SvxError> = std::result::Result<T, E>;
