use thiserror::Error;

/// Errors raised across the library and the command-line surface.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative numerical routine failed to converge or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Maximum-likelihood fitting failed.
    #[error("fit error: {message}")]
    Fit {
        message: String,
        /// Best log-likelihood reached before giving up, if any start was feasible.
        best_loglik: Option<f64>,
    },

    /// Malformed input data, reported with its 1-based row number.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for the CLI: 2 for configuration or input problems, 3 for numeric or fit failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
            Error::Domain(_) | Error::Numeric(_) | Error::Fit { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
