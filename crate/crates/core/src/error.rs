use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("worker {worker}: invalid moments (E[U]={mean}, E[U^2]={second_moment})")]
    InvalidMoments {
        worker: usize,
        mean: f64,
        second_moment: f64,
    },

    #[error("worker {worker} has zero mean task time; the load split is undefined")]
    DegenerateWorker { worker: usize },

    #[error("unstable system: utilization {rho} >= 1")]
    UnstableSystem { rho: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("subset budget exceeded: {subsets} subsets to check, cap is {cap}")]
    BudgetExceeded { subsets: u128, cap: u128 },

    #[error("decode failure: {0}")]
    DecodeFailure(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
