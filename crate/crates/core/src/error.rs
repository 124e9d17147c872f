use std::path::PathBuf;

/// Errors produced by the library.
///
/// The CLI maps every variant to the "data error" exit code except
/// [`Error::Internal`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("blur radius {radius:.3} px exceeds the configured maximum {max:.3} px")]
    RadiusTooLarge { radius: f64, max: f64 },

    #[error("{0}")]
    Geometry(String),

    #[error("sampling failed after {attempts} attempts: {reason}")]
    Sampling { attempts: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("line {line}: {reason}")]
    Jsonl { line: usize, reason: String },

    #[error("raster contains NaN at sample index {index}")]
    NanSample { index: usize },

    #[error("{0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Decode {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
