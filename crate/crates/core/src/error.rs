use thiserror::Error;

/// Errors raised while building or reading an environment.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("branching parameter theta must lie in (0, 1], got {0}")]
    Theta(f64),
    #[error("time must be non-negative and finite, got {0}")]
    NegativeTime(f64),
    #[error("invalid hazard: {0}")]
    Hazard(String),
    #[error("invalid offspring mean: {0}")]
    OffspringMean(String),
    #[error("environment violates constraints: {0}")]
    Invalid(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("config: {0}")]
    Config(String),
}

/// Errors from the numerical layers (quadrature, transforms, exact formulas).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("quadrature did not converge on [{a}, {b}] after {evals} evaluations (estimate {partial:e}, error {error:e})")]
    NonConvergence {
        a: f64,
        b: f64,
        evals: usize,
        partial: f64,
        error: f64,
    },
    #[error("integrand is not a number at x = {0}")]
    NotANumber(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("limit probe was inconclusive for {0}")]
    Inconclusive(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
}

/// Errors from simulation and Monte Carlo estimation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no surviving replicas at t = {t} for conditional quantity `{quantity}`")]
    DegenerateSample { quantity: String, t: f64 },
}
