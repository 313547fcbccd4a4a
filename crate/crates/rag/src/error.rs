use std::io;
use std::path::PathBuf;

use conformal_rag_core::{ErrorKind, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] conformal_rag_core::Error),

    #[error("path `{}` does not exist", .0.display())]
    Missing(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: not valid UTF-8", .0.display())]
    NotUtf8(PathBuf),

    #[error("corrupt store {}: {reason}", path.display())]
    CorruptStore { path: PathBuf, reason: String },

    #[error("store {} has format version {found}, this build reads version {expected}", path.display())]
    StoreVersion {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{}:{line}: {reason}", path.display())]
    BadLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{}: {reason}", path.display())]
    BadFile { path: PathBuf, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error("{stage} failed: {source}")]
    Provider {
        stage: &'static str,
        #[source]
        source: ProviderError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) => match e.kind() {
                ErrorKind::Config => EXIT_USAGE,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Provider => EXIT_PROVIDER,
            },
            Error::Missing(_) | Error::Usage(_) => EXIT_USAGE,
            Error::Provider {
                source: ProviderError::Transport { .. },
                ..
            } => EXIT_PROVIDER,
            _ => EXIT_DATA,
        }
    }
}
