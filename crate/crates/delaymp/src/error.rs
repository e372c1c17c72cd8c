use thiserror::Error;

/// Errors surfaced by the toolkit's numerical and configuration layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("delay must be positive (got {0})")]
    NonPositiveDelay(f64),

    #[error("horizon {horizon} is not an integer multiple of the step {step}")]
    NonDivisibleHorizon { horizon: f64, step: f64 },

    #[error("non-finite state at path {path}, step {step}: {value}")]
    NonFiniteState { path: usize, step: usize, value: f64 },

    #[error("ensemble does not match the grid: expected {expected} increments per path, got {got}")]
    EnsembleMismatch { expected: usize, got: usize },

    #[error("objects built on different grids: {0}")]
    GridMismatch(String),

    #[error(
        "regression design matrix is ill-conditioned (diagnostic {diagnostic:.3e}) and ridge fallback is disabled"
    )]
    IllConditionedRegression { diagnostic: f64 },

    #[error("spike [{tau}, {tau_end}] is not contained in [0, {horizon}]")]
    SpikeOutOfRange { tau: f64, tau_end: f64, horizon: f64 },

    #[error("order study needs at least 3 epsilon values spanning a factor of 4, got {0}")]
    InsufficientEpsilons(usize),

    #[error("empty tau or v grid in maximum-condition scan")]
    EmptyGrid,

    #[error("alternative control takes values outside the control set (first offending value {0})")]
    InadmissibleAlternative(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
