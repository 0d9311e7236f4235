use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Unclamped mode left [-1-1e-9, 1+1e-9]; the input tensor is broken.
    #[error("mode value {0} outside [-1, 1] beyond clamp tolerance")]
    NumericalRange(f64),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("ensemble members disagree on grid geometry: {0}")]
    GeometryMismatch(String),

    #[error("invalid grid geometry: {0}")]
    Geometry(String),

    #[error("malformed manifest {path}: {reason}")]
    ManifestParse { path: PathBuf, reason: String },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("attribute name {0:?} is not a valid PLY property identifier")]
    UnsupportedAttribute(String),

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

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
