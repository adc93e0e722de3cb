use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition was not met by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("dataset {0} has no entries")]
    EmptyDataset(PathBuf),

    #[error("image path does not resolve under dataset root: {0}")]
    UnresolvablePath(PathBuf),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("baseline error sum is zero for factor {0}")]
    ZeroBaselineError(String),

    #[error("unsupported corruption '{0}' (snow, frost and jpeg are not implemented)")]
    Unsupported(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("benchmark generation failed after {} completed datasets: {source}", completed.len())]
    Benchmark {
        completed: Vec<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        // Negation keeps NaN on the failing side.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
