use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("transition matrix is not irreducible")]
    NotIrreducible,
    #[error("transition matrix is periodic with period {0}")]
    Periodic(u64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("tuple space of size {size} exceeds the limit {limit}")]
    TupleSpaceTooLarge { size: u128, limit: u128 },
    #[error("arity mismatch: expected {expected} arguments, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("trajectory too short: need {needed} values, have {available}")]
    TrajectoryTooShort { needed: usize, available: usize },
    #[error("path does not cover the required times: {0}")]
    InsufficientPath(String),
    #[error("degenerate variance {0}")]
    DegenerateVariance(f64),
    #[error("series tail estimate {tail:e} exceeds tolerance {tol:e}")]
    TailNotConverged { tail: f64, tol: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("bad time grid: {0}")]
    BadGrid(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("state {0} has zero stationary mass")]
    ZeroMassState(usize),
    #[error("state space of size {0} is too large for exact enumeration")]
    StateSpaceTooLarge(usize),
    #[error("block parameters violate 4*eta < 2*theta < tau: {0}")]
    ParameterGateViolated(String),
    #[error("schedule too short to evaluate nu({0})")]
    ScheduleTooShort(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
