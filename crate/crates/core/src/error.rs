use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field length {got} does not match grid with {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in field `{0}`")]
    NonFinite(String),

    #[error("helmholtz solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("positivity violated: min({field}) = {min:.3e}")]
    Positivity { field: &'static str, min: f64 },

    #[error("step failed after {halvings} dt halvings at t = {t}: {cause}")]
    StepFailed { t: f64, halvings: usize, cause: Box<Error> },

    #[error("outside the energy regime (requires gamma = exp(-v), tau = delta = 1): {0}")]
    Regime(String),

    #[error("missing previous time level: {0}")]
    MissingHistory(String),

    #[error("blow-up profile: {0}")]
    InitData(String),

    #[error("stationary iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    StationaryNonConvergence { iterations: usize, residual: f64 },

    #[error("classifier: {0}")]
    Classifier(String),

    #[error("bisection: {0}")]
    Bisection(String),
}

pub type Result<T> = std::result::Result<T, Error>;
