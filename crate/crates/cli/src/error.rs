use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures are split by exit code: bad input or arguments (1) versus the
/// filesystem (2).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Io { .. } => 2,
        }
    }

    pub fn invalid(path: &Path, message: impl std::fmt::Display) -> Self {
        Self::Validation(format!("{}: {message}", path.display()))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
