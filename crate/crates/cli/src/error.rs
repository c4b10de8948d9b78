use std::path::Path;

use thiserror::Error;

use nar_core::NarError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Core(#[from] NarError),
    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
