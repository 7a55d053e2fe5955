//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent user input (dimensions, non-finite values, bad ranges).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model state object violates its own invariants.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Numerical failure that survived the configured recovery path
    /// (e.g. a Cholesky factorization that failed through the whole jitter ladder).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Sampler could not be initialized (non-finite likelihood at the start point).
    #[error("initialization error: {0}")]
    Initialization(String),

    /// Two fitted models disagree on their kernel-input or covariate layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// A regression design matrix is rank deficient; names the offending columns.
    #[error("singular design: linearly dependent columns {columns:?}")]
    SingularDesign { columns: Vec<String> },

    /// Configuration file or CLI configuration problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code for the CLI: one code per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 2,
            Error::InvalidState(_) => 2,
            Error::Schema(_) => 3,
            Error::SingularDesign { .. } => 3,
            Error::Numerical(_) => 4,
            Error::Initialization(_) => 4,
            Error::Config(_) => 5,
            Error::Io(_) => 6,
            Error::Csv(_) => 6,
            Error::Json(_) => 6,
        }
    }
}
