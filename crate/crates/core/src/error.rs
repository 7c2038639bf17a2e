use thiserror::Error;

/// Errors raised by the solver, the simulator and the diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("invalid market specification: {0}")]
    InvalidSpec(String),

    #[error("non-finite {what} at t = {time}")]
    NumericDomain { what: &'static str, time: f64 },

    #[error("ill-conditioned impact conjugation γ^(-1/2)ργ^(1/2) at t = {time}")]
    IllConditionedImpact { time: f64 },

    #[error("coefficients are not deterministic: {0}")]
    StochasticCoefficients(String),

    #[error("no valid F with R·F = Q: R has minimum eigenvalue {min_eig:e} at t = {time}")]
    NoValidF { time: f64, min_eig: f64 },

    #[error("singular Riccati driver at t = {time}: minimum eigenvalue {min_eig:e} below {floor:e}")]
    SingularDriver { time: f64, min_eig: f64, floor: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite cost on Monte Carlo path {path}")]
    NonFinitePath { path: usize },
}

pub type Result<T> = std::result::Result<T, ExecError>;
