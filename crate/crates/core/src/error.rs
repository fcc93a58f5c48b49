use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {point} lies outside the interval [{lower}, {upper}]")]
    Domain { point: f64, lower: f64, upper: f64 },

    #[error("non-finite value in integral term {term}")]
    NonFinite { term: usize },

    #[error("state is not an equilibrium: relative spread of x_j/theta_j is {spread:e}")]
    NotAnEquilibrium { spread: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    IterationLimit {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("lambda = {re} + {im}i is (numerically) a pole: lambda*I - D_M is singular")]
    Pole { re: f64, im: f64 },

    #[error("singular matrix in linear solve")]
    Singular,

    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: &'static str },

    #[error("trajectory is not periodic: {0}")]
    NotPeriodic(String),

    #[error("branch terminated at parameter {param} (b = {b_eq}): {reason}")]
    BranchTerminated {
        param: f64,
        b_eq: f64,
        reason: String,
    },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from bad input (as opposed to a numerical failure).
    pub fn is_domain_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Domain { .. }
                | Error::UnknownModel(_)
                | Error::UnknownParameter(_)
                | Error::Json(_)
        )
    }
}
