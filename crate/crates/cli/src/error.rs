use serde_json::json;
use severity_core::ErrorCategory;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config values or missing inputs.
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] severity_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::Config(_) => ErrorCategory::Config,
            CliError::Core(e) => e.category(),
        }
    }

    /// 1 usage/config, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Config => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Numeric => 3,
        }
    }

    pub fn to_json(&self, command: &str) -> serde_json::Value {
        let category = match self.category() {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numeric => "numeric",
        };
        json!({
            "error": {
                "command": command,
                "category": category,
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
    }
}
