use std::path::{Path, PathBuf};

use thiserror::Error;
use tlpred_core::ErrorKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Argument(String),

    #[error("invalid config file: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Core(#[from] tlpred_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Argument(_) | Self::Toml(_) => 2,
            Self::Core(e) => match e.kind() {
                ErrorKind::Argument => 2,
                ErrorKind::Numeric => 3,
                ErrorKind::Io => 4,
            },
            Self::Io { .. } | Self::Csv(_) | Self::Json(_) => 4,
        }
    }
}
