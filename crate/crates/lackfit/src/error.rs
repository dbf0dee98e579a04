use std::path::{Path, PathBuf};

/// Errors surfaced by the command-line tool, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Invalid configuration or unreadable input (exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed data file (exit code 2).
    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    /// Estimation or test failure (exit code 3, or 4 for an aborted test).
    #[error(transparent)]
    Pipeline(#[from] lackfit_core::Error),

    /// Output could not be written (exit code 3).
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Data { .. } => 2,
            AppError::Pipeline(e)
                if matches!(e.root(), lackfit_core::Error::TestAborted { .. }) =>
            {
                4
            }
            AppError::Pipeline(_) | AppError::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
        move |source| AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn data(path: &Path, message: impl Into<String>) -> AppError {
        AppError::Data {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}
