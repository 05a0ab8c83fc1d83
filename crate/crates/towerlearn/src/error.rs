use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] towerlearn_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    /// Malformed binary file; `offset` is the byte where decoding failed.
    #[error("{path}: {message} at byte {offset}")]
    Parse { path: PathBuf, offset: u64, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit code: 2 for bad input (configs, arguments, missing
    /// files), 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Core(towerlearn_core::Error::Config(_) | towerlearn_core::Error::Usage(_)) => 2,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}

/// Attaches the path to IO errors.
pub trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
