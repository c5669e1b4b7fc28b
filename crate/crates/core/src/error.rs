use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("combinatorial budget exceeded: {required} subsets needed, budget is {budget}")]
    Budget { required: u128, budget: u128 },

    #[error("objective diverged at iteration {iteration} (objective {objective:e}, initial {initial:e})")]
    Diverged {
        iteration: usize,
        objective: f64,
        initial: f64,
    },

    #[error("inner solver failed at outer iteration {outer}: {reason}")]
    InnerSolver {
        outer: usize,
        reason: String,
        /// Last outer iterate before the failure.
        iterate: Vec<f64>,
    },

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("problem too large for exhaustive search: n = {n} exceeds max_n = {max_n}")]
    TooLarge { n: usize, max_n: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
