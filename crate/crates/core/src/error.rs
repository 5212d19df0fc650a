use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the training and evaluation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("parse error in {}: byte {offset}: {msg}", file.display())]
    Parse { file: PathBuf, offset: u64, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by NaN/Inf reaching a computation.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
