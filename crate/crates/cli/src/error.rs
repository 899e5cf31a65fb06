use std::path::Path;

use thiserror::Error;

/// Every failure maps to one exit status and one stderr line of the form
/// `error[<code>] ...`.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("error[config] key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("error[missing-input] {path}: {message}")]
    Missing { path: String, message: String },
    #[error("error[runtime] {0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.to_string(),
        }
    }

    pub fn missing(path: &Path, message: impl ToString) -> Self {
        CliError::Missing {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl ToString) -> Self {
        CliError::Runtime(message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Missing { .. } => 3,
            CliError::Runtime(_) => 1,
        }
    }
}
