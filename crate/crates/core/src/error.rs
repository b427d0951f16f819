use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid lattice reference: {0}")]
    InvalidReference(String),

    #[error("invalid loop: {0}")]
    InvalidLoop(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    /// A loop average or correlator that must be positive for a logarithm
    /// was not (usually the noise-dominated regime).
    #[error("nonpositive value where a positive one is required: {0}")]
    NonPositive(String),

    #[error("contraction needs {needed} tensor entries, budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },

    #[error("quadrature did not converge: last change {change:e} at {n_nodes} nodes (tol {tol:e})")]
    NotConverged { change: f64, n_nodes: usize, tol: f64 },

    #[error("monotonicity violated at index {index}: {previous} > {value}")]
    MonotonicityViolated {
        index: usize,
        previous: f64,
        value: f64,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
