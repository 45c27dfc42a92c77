use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {found:?} (expected \"NAT1\")")]
    BadMagic { found: [u8; 4] },
    #[error("truncated tensor file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("tensor ndim {0} outside supported range 1..=4")]
    NdimOutOfRange(usize),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("{0} trailing bytes after tensor payload")]
    TrailingBytes(usize),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("duplicate trial_id {0:?}")]
    DuplicateTrial(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::SingularDesign(_) | Error::DegenerateVariance(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
