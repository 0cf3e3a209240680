use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// The scenario file could not be parsed; the message carries line and
    /// column.
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// The scenario parsed but is inconsistent.
    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: oemsim_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if source.is_numerical() => 2,
            _ => 1,
        }
    }
}

/// Attaches the pipeline stage to a core error.
pub(crate) trait Context<T> {
    fn ctx(self, context: &str) -> Result<T>;
}

impl<T> Context<T> for oemsim_core::Result<T> {
    fn ctx(self, context: &str) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: context.to_string(),
            source,
        })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
