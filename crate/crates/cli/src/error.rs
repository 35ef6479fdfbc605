//! Error type shared by the numeric layer and the command-line front end.

use thiserror::Error;

/// Everything that can go wrong between a scenario file and its report.
#[derive(Debug, Error)]
pub enum CliError {
    /// The exact symbolic layer rejected an input.
    #[error("algebra: {0}")]
    Algebra(moyal::AlgError),
    /// A sampled state or phase-space grid was built from inconsistent data.
    #[error("grid: {0}")]
    Grid(String),
    /// A scenario file asked for something outside the supported surface.
    #[error("scenario: {0}")]
    Scenario(String),
    /// A numeric routine produced values it cannot stand behind.
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<moyal::AlgError> for CliError {
    fn from(e: moyal::AlgError) -> Self {
        CliError::Algebra(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
