use thiserror::Error;

/// Errors raised while building models or running experiments.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameters violate a precondition (expansion, ordering, ranges).
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// The Lyapunov exponents are not ordered as lambda_u < lambda_uu.
    #[error("hypothesis violated: lambda_u = {lambda_u} is not below lambda_uu = {lambda_uu}")]
    ExponentOrdering { lambda_u: f64, lambda_uu: f64 },

    /// An iterative solver did not reach its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// A ball-measure bracket was too wide or a geometric search ran out.
    #[error("resolution failure: {0}")]
    Resolution(String),

    /// Two independent routes to the same quantity disagree.
    #[error("inconsistent results: {0}")]
    Inconsistent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable reason used in reports and exit diagnostics.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::InvalidParameters(_) => "invalid_parameters",
            Error::ExponentOrdering { .. } => "exponent_ordering",
            Error::NonConvergence(_) => "non_convergence",
            Error::Resolution(_) => "resolution_failure",
            Error::Inconsistent(_) => "inconsistent",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameters(_) | Error::ExponentOrdering { .. } | Error::Config(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
