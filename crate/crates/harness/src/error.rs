use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] hris::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("config parse error: {0}")]
    Parse(String),

    /// Every violated constraint of a spec, one entry per field.
    #[error("invalid spec: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("cannot align runs: {0}")]
    Alignment(String),

    #[error("malformed artifact {path}: {detail}")]
    Artifact { path: PathBuf, detail: String },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        HarnessError::Artifact {
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
