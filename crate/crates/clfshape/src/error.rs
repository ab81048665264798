//! Errors and exit codes.

use std::path::PathBuf;

/// Errors of the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration failed to parse or validate.
    #[error("invalid config: {0}")]
    Config(String),
    /// An output file exists and overwriting was not requested.
    #[error("{0} already exists (pass --force to overwrite)")]
    Exists(PathBuf),
    /// Filesystem failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// CSV encoding or decoding failure.
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// JSON encoding or decoding failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    /// Failure inside the numerical core.
    #[error(transparent)]
    Core(#[from] clfshape_core::Error),
    /// Thread-pool construction failure.
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Result alias for the runner.
pub type Result<T> = std::result::Result<T, CliError>;
