use std::path::PathBuf;

/// Every failure a command can report, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Validation(String),
    #[error("{context}: {message}")]
    Failed { context: String, message: String },
}

impl CliError {
    /// 2 for usage errors and missing inputs, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::MissingInput(_) => 2,
            CliError::Validation(_) | CliError::Failed { .. } => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn context(self, what: impl Into<String>) -> CliResult<T> {
        self.map_err(|e| CliError::Failed {
            context: what.into(),
            message: e.to_string(),
        })
    }
}
