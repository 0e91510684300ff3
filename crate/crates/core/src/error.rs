//! Error type shared across the crate.
//!
//! Variants map onto the CLI exit codes: invalid input (2), degenerate
//! statistics (3), I/O (4).

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input failed validation (shape, range, missing ids, bad flags).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A statistic is undefined on this data (zero variance, single class,
    /// empty group after filtering).
    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    /// Filesystem failure, with the offending path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents do not parse.
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 2 validation, 3 degenerate, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Parse { .. } => 2,
            Error::Degenerate(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}
