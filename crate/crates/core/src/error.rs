use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing stack file for fire {fire_id}: {path}")]
    MissingFile { fire_id: u64, path: PathBuf },

    #[error("malformed header in {path}: field `{field}`: {message}")]
    MalformedHeader {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("dimension mismatch in {path}: header declares {expected} values, file holds {found}")]
    DimensionMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("crop half-width {half_width} px does not fit a {height}x{width} grid")]
    OutOfRange {
        half_width: usize,
        height: usize,
        width: usize,
    },

    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: String, message: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
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
