use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("parameter `{name}`: {message}")]
    Parameter { name: &'static str, message: String },

    /// Exact second-order variance was requested above the configured work budget.
    #[error(
        "exact sigma_{{n,2}} budget exceeded: n + K = {required} > budget {budget}; \
         fall back to monte_carlo_sigma2"
    )]
    BudgetExceeded { required: usize, budget: usize },

    /// The requested quantity is undefined on a theorem boundary.
    #[error("unsupported boundary: {0}")]
    UnsupportedBoundary(String),

    /// The model has no second-order component (e.g. white noise, K = 0).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// A normalization was requested that contradicts the regime of beta.
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    /// Sign-change bracketing for the M-estimator failed.
    #[error("no root: {0}")]
    NoRoot(String),

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// An internal consistency contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computed value left its numeric domain (NaN, probability outside (0,1), ...).
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("empty sample")]
    EmptySample,

    /// Experiment config failed schema validation; `pointer` is a JSON pointer.
    #[error("config schema violation at `{pointer}`: {message}")]
    Schema { pointer: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parameter(name: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            message: message.into(),
        }
    }
}
