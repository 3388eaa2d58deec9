use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("malformed config at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid config field {field}: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Numerical(#[from] geolqr::Error),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("{failed} invariant check(s) failed")]
    CheckFailed { failed: usize },
}

impl CliError {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// 2 for config problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } | CliError::CheckFailed { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Validation { .. } => "validation_error",
            CliError::Numerical(e) => e.kind(),
            CliError::Io { .. } => "io_error",
            CliError::CheckFailed { .. } => "check_failed",
        }
    }

    /// One line for the error stream: `error kind=<kind> [field=<path>] message=<json string>`.
    pub fn reason_line(&self) -> String {
        let message = serde_json::to_string(&self.to_string()).unwrap_or_default();
        match self {
            CliError::Parse { path, .. } => format!("error kind={} field={path} message={message}", self.kind()),
            CliError::Validation { field, .. } => format!("error kind={} field={field} message={message}", self.kind()),
            _ => format!("error kind={} message={message}", self.kind()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
