use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("problem is not convex: {0}")]
    NotConvex(String),
    #[error("problem kind mismatch: {0}")]
    KindMismatch(String),
    #[error("quadratic coefficient is singular (min eigenvalue {0:e})")]
    SingularA(f64),
    #[error("problem is not a single power-constraint problem: {0}")]
    NotSingleConstraintForm(String),
    #[error("no multiplier bracket found after {0} doublings")]
    InfeasibleBracket(usize),
    #[error("conic solver failed: {0}")]
    ConicSolverFailure(String),
    #[error("problem is infeasible")]
    InfeasibleProblem,
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("no error model for channel {0}")]
    MissingErrorModel(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown variable: {0}")]
    UnknownVariable(String),
    #[error("objective increased from {before} to {after} at {step}")]
    NonMonotoneDetected {
        before: f64,
        after: f64,
        step: String,
    },
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
