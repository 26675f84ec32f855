//! CLI error classification: every failure maps to an exit code and a
//! machine-readable JSON object on stderr.
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

use hybridguard::Error as LibError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "code": self.exit_code(),
                "kind": self.kind(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

impl From<LibError> for CliError {
    fn from(error: LibError) -> Self {
        let message = error.to_string();
        match error {
            LibError::UnknownLabelColumn { .. }
            | LibError::InvalidArgument(_)
            | LibError::UnknownClass(_)
            | LibError::MissingPlugin(_)
            | LibError::BatchTooLarge { .. }
            | LibError::UnsupportedInverse => CliError::Config(message),
            LibError::NonFinite(_) => CliError::Numeric(message),
            LibError::Io(_)
            | LibError::Csv(_)
            | LibError::Json(_)
            | LibError::MissingFile { .. }
            | LibError::ParseCell { .. }
            | LibError::EmptyColumnImpute { .. }
            | LibError::ShapeMismatch(_)
            | LibError::ModelFormat(_) => CliError::Data(message),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(error: std::io::Error) -> Self {
        CliError::Data(format!("i/o error: {error}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
