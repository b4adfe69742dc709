use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(#[from] embedlab_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    /// Machine-readable error object printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let (class, kind) = match self {
            CliError::Config(_) => ("config", "Config"),
            CliError::Numerical(e) => ("numerical", e.kind()),
            CliError::Io(_) => ("io", "Io"),
        };
        json!({ "error": { "class": class, "kind": kind, "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}
