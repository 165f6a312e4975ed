use std::path::{Path, PathBuf};

use fedcal_core::Error as CoreError;

/// Process exit codes by error category.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    /// Command-line usage errors (reported by the argument parser).
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const NUMERIC: i32 = 5;
    pub const IO: i32 = 6;
    /// `bench` ran but a directional check did not hold.
    pub const CHECK_FAILED: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("format error in {path}{}: {detail}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        offset: Option<u64>,
        detail: String,
    },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl RunError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, offset: Option<u64>, detail: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            offset,
            detail: detail.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::Format { .. } => exit::FORMAT,
            Self::Numeric(_) => exit::NUMERIC,
            Self::Io { .. } => exit::IO,
            Self::Core(e) => match e {
                CoreError::Config(_) | CoreError::InvalidInput(_) | CoreError::Usage(_) => {
                    exit::CONFIG
                }
                CoreError::Numeric { .. } | CoreError::Degenerate(_) => exit::NUMERIC,
                CoreError::Transport(_) => exit::INTERNAL,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, RunError>;
