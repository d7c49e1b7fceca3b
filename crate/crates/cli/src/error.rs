use std::path::Path;

/// Failures that end a run, mapped to exit codes 1 and 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or config.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent data.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn at(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}
