use std::path::{Path, PathBuf};

use serde::Serialize;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rbnma::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("missing {artifact} (expected at {path}); run `{producer}` first")]
    MissingArtifact { artifact: String, path: PathBuf, producer: String },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "ConfigError",
            CliError::Io { .. } => "IoError",
            CliError::Parse { .. } => "ParseError",
            CliError::MissingArtifact { .. } => "MissingArtifact",
            CliError::Usage(_) => "UsageError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(rbnma::Error::AdaptationFailure { .. }) => EXIT_CONVERGENCE,
            CliError::Io { .. } => EXIT_FAILURE,
            _ => EXIT_VALIDATION,
        }
    }

    pub fn document(&self) -> ErrorDocument {
        let dependency = match self {
            CliError::MissingArtifact { artifact, path, .. } => Some(format!("{artifact} ({})", path.display())),
            _ => None,
        };
        ErrorDocument { kind: self.kind().to_string(), message: self.to_string(), exit_code: self.exit_code(), missing_dependency: dependency }
    }
}

/// Machine-readable error written as `error.json`.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct ErrorDocument {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing_dependency: Option<String>,
}
