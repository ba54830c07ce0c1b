use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input.
    #[error("{message}")]
    Input {
        kind: &'static str,
        message: String,
        path: Option<PathBuf>,
    },
    #[error("`{missing}` not found; run `{prerequisite}` first")]
    MissingFit { missing: PathBuf, prerequisite: String },
    /// Every fit of the requested scope failed.
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    pub fn input(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Input {
            kind,
            message: message.into(),
            path: None,
        }
    }

    pub fn at(path: &Path, kind: &'static str, message: impl std::fmt::Display) -> Self {
        CliError::Input {
            kind,
            message: format!("{}: {message}", path.display()),
            path: Some(path.to_path_buf()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::MissingFit { .. } => 1,
            CliError::Estimation(_) => 2,
        }
    }

    pub fn report(&self) -> serde_json::Value {
        let (kind, path, prerequisite) = match self {
            CliError::Input { kind, path, .. } => (*kind, path.as_deref(), None),
            CliError::MissingFit { missing, prerequisite } => ("missing_fit", Some(missing.as_path()), Some(prerequisite)),
            CliError::Estimation(_) => ("estimation_failed", None, None),
        };
        json!({
            "status": "error",
            "exit_code": self.exit_code(),
            "kind": kind,
            "message": self.to_string(),
            "path": path.map(|p| p.display().to_string()),
            "prerequisite": prerequisite,
        })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input("io", e.to_string())
    }
}

/// Attaches a path to library errors.
pub trait Context<T> {
    fn at(self, path: &Path, kind: &'static str) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn at(self, path: &Path, kind: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::at(path, kind, e))
    }
}
