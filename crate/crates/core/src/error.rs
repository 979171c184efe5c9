use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
///
/// Every variant maps onto a stable machine-readable `kind` string used by the
/// command-line front end.
#[derive(Debug, Error)]
pub enum NvfError {
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("optimizer error in parameter group `{group}`: {reason}")]
    Optimizer { group: &'static str, reason: String },

    #[error("training diverged at iteration {iteration}: {reason}")]
    Training { iteration: usize, reason: String },

    #[error("editor failed on frame {frame_index} at iteration {iteration}: {reason}")]
    Edit {
        frame_index: usize,
        iteration: usize,
        reason: String,
    },

    #[error("i/o error on {}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },

    #[error("format error: {0}")]
    Format(String),
}

impl NvfError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        NvfError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn contract(reason: impl Into<String>) -> Self {
        NvfError::Contract(reason.into())
    }

    pub fn io(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        NvfError::Io {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Short, stable identifier of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            NvfError::Config { .. } => "config",
            NvfError::Contract(_) => "contract",
            NvfError::Optimizer { .. } => "optimizer",
            NvfError::Training { .. } => "training",
            NvfError::Edit { .. } => "edit",
            NvfError::Io { .. } => "io",
            NvfError::Format(_) => "format",
        }
    }
}

pub type Result<T, E = NvfError> = std::result::Result<T, E>;
