//! Empirical likelihood (EL), exponentially tilted empirical likelihood (ETEL)
//! and its adjusted, weighted and regularized variants, together with the
//! Bayesian and statistical machinery needed to use them as pseudo-likelihoods.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: datasets, estimating functions, moment matrices and the
//!   regularization presets.
//! - [`solver`]: damped Newton solvers for the convex tilting duals.
//! - [`likelihood`]: tilted weights and log-likelihood (ratio) values for the
//!   six supported methods.
//! - [`inference`]: priors, random-walk Metropolis–Hastings, grid posteriors
//!   and coverage diagnostics.
//! - [`stats`]: special functions, Kolmogorov–Smirnov, kernel density
//!   estimation, adaptive quadrature and sandwich covariances.
//! - [`rng`]: counter-based random streams for reproducible parallel work.

pub mod error;
pub mod inference;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{LikelihoodSpec, LogLik, Method, TiltedWeights};
pub use model::{
    Dataset, EstimatingFunction, MeanFunction, MeanVarFunction, MomentMatrix, Penalty,
    PseudoData, Regularization,
};
pub use solver::{DualSolution, DualStatus, SolverSettings};
