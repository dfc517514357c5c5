use std::path::Path;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or missing flags; reported with the subcommand help.
    #[error("{message}")]
    Usage { subcommand: Option<String>, message: String },

    #[error("{path}: invalid config at `{key}`: {message}")]
    Schema { path: String, key: String, message: String },

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Numeric(#[from] pddcov::Error),
}

impl CliError {
    pub fn usage(subcommand: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            subcommand: Some(subcommand.to_string()),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(pddcov::Error::Io(_) | pddcov::Error::Parse(_)) => 1,
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }

    pub fn diagnostic(&self) -> serde_json::Value {
        match self {
            CliError::Usage { message, .. } => json!({"error": "Usage", "message": message}),
            CliError::Schema { path, key, message } => {
                json!({"error": "Schema", "file": path, "key": key, "message": message})
            }
            CliError::Io(m) => json!({"error": "Io", "message": m}),
            CliError::Numeric(e) => {
                let mut d = json!({"error": e.kind(), "message": e.to_string()});
                if let pddcov::Error::Column { index, source } = e {
                    d["column"] = json!(index);
                    d["cause"] = json!(source.kind());
                }
                d
            }
        }
    }
}
