use thiserror::Error;

use crate::solver::DualSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("estimating function returned a non-finite value at row {row}")]
    Evaluation { row: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    /// The regularized solver ran out of iterations; the best iterate is kept
    /// for diagnostics.
    #[error("solver stopped after {} iterations with gradient norm {:.3e}", best.iterations, best.grad_norm)]
    NotConverged { best: Box<DualSolution> },

    #[error("matrix is singular or not positive definite: {0}")]
    Rank(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("quadrature did not reach the requested accuracy (partial value {partial})")]
    Accuracy { partial: f64 },

    #[error("density support mismatch: {0}")]
    Support(String),

    #[error("posterior is zero at every grid point")]
    EmptyPosterior,

    #[error("chain {chain} starts at a point with zero target density")]
    Initialization { chain: usize },
}
