use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] radialfeas::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training diverged for {run}: {reason}; last good parameters saved to {}", checkpoint.display())]
    Diverged {
        run: String,
        reason: String,
        checkpoint: PathBuf,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_context(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}
