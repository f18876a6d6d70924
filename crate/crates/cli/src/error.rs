//! Command failures and their exit codes.

use gleams_core::{BlackBoxError, BuildError, EvalError, ExplainError, FormatError, GeometryError};
use serde_json::json;
use thiserror::Error;

use crate::dataset::DatasetError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, malformed points, or arguments inconsistent with the
    /// surrogate.
    #[error("{0}")]
    Usage(String),
    /// The external model failed to start, handshake or answer.
    #[error("{0}")]
    Adapter(String),
    /// A surrogate, bounds, dataset or ground-truth file is malformed.
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Adapter(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Adapter(_) => "adapter",
            CliError::Schema(_) => "schema",
            CliError::Io(_) => "io",
            CliError::Other(_) => "error",
        }
    }

    /// The single-line JSON written to stderr.
    pub fn to_json_line(&self) -> String {
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

impl From<BlackBoxError> for CliError {
    fn from(e: BlackBoxError) -> Self {
        match e {
            BlackBoxError::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            other => CliError::Adapter(other.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(io) => CliError::Io(format!("cannot read surrogate: {io}")),
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Model(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}
