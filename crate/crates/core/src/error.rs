use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the registration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("load error in {path}: {field}: {reason}")]
    Load {
        path: PathBuf,
        field: &'static str,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("image too small for DWT ({width}x{height})")]
    TooSmallForDwt { width: usize, height: usize },

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("singular matrix (determinant {0})")]
    Singular(f64),

    #[error("no overlap between images under the mask")]
    NoOverlap,

    #[error("undefined correlation: zero variance over the mask")]
    UndefinedCorrelation,

    #[error("invalid start: objective is not finite at the initial parameters")]
    InvalidStart,

    #[error("registration lost overlap at level {level}")]
    LostOverlap { level: usize },

    #[error("fixture unusable: {0}")]
    FixtureUnusable(String),

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
