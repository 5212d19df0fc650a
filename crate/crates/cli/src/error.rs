use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit status for successful runs.
pub const EXIT_OK: i32 = 0;
/// Bad configuration, bad arguments, missing inputs.
pub const EXIT_USAGE: i32 = 2;
/// A NaN or infinity stopped a computation.
pub const EXIT_NUMERIC: i32 = 3;
/// A manifest listed a file that is missing or has a different checksum.
pub const EXIT_VERIFY: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] gogan_core::Error),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Verify(_) => EXIT_VERIFY,
            _ => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
