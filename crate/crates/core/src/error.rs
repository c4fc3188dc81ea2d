use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("truncated NIfTI data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error("value {value} at voxel {index} is not representable as {datatype}")]
    Unrepresentable {
        value: f64,
        index: usize,
        datatype: &'static str,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("duplicate subject id {0:?}")]
    DuplicateSubject(String),

    #[error("analysis mask is empty")]
    EmptyMask,

    #[error("invalid scores: {0}")]
    InvalidScores(String),

    #[error("invalid ROI: {0}")]
    InvalidRoi(String),

    #[error("voxel {voxel} has zero pooled variance with a nonzero group difference")]
    ZeroVariance { voxel: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("null cache error: {0}")]
    Cache(String),
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

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Cache(_))
    }
}
