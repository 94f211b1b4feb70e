//! Simulation studies. Each replicate draws from its own stream keyed by
//! `(seed, cell, replicate)` and results are reduced in replicate order, so
//! tables do not depend on the thread count.

mod curves;
mod kl;
mod mean_studies;
pub mod small_area;

pub use curves::{run_lambda_convergence, run_logratio_curve};
pub use kl::run_kl;
pub use mean_studies::{run_coverage, run_uniformity, run_wilks};
pub use small_area::{run_small_area, AreaData, AreaMetrics};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use retel_core::model::{evaluate_moments, MeanFunction, PseudoData};
use retel_core::rng::StreamRng;
use retel_core::{Dataset, LikelihoodSpec, LogLik, Method, Regularization, SolverSettings};

use crate::error::Result;

/// Replicates `0..reps` in parallel, returned in index order.
pub(crate) fn par_reps<T, F>(reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..reps).into_par_iter().map(f).collect()
}

/// Mean and its standard error over finite entries.
pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn normal_draws(rng: &mut StreamRng, n: usize, mean: f64) -> Vec<f64> {
    (0..n).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Likelihood for the scalar mean model `g(x, θ) = x − θ`.
pub(crate) fn mean_spec(method: Method, reg: Option<Regularization>, wetel_m: usize) -> Result<LikelihoodSpec> {
    let need_reg = || reg.clone().expect("regularized methods are given a penalty");
    Ok(match method {
        Method::El => LikelihoodSpec::El,
        Method::Etel => LikelihoodSpec::Etel,
        Method::Aetel => LikelihoodSpec::Aetel { a_n: None },
        Method::Wetel => LikelihoodSpec::Wetel { pseudo: PseudoData::normal_quantiles(wetel_m)? },
        Method::RetelF => LikelihoodSpec::RetelF { reg: need_reg() },
        Method::RetelR => LikelihoodSpec::RetelR { reg: need_reg() },
    })
}

/// A mean-model likelihood that starts each dual solve from the last
/// converged multiplier.
pub(crate) struct MeanLik {
    data: Dataset,
    spec: LikelihoodSpec,
    settings: SolverSettings,
}

impl MeanLik {
    pub(crate) fn new(xs: &[f64], spec: LikelihoodSpec) -> Result<Self> {
        Ok(Self { data: Dataset::from_scalars(xs)?, spec, settings: SolverSettings::default() })
    }

    pub(crate) fn eval(&mut self, theta: f64) -> retel_core::Result<LogLik> {
        let m = evaluate_moments(&MeanFunction::scalar(), &self.data, &[theta])?;
        let ll = self.spec.evaluate(&m, &self.data, &self.settings)?;
        self.settings.initial_lambda = ll.solution.is_converged().then(|| ll.solution.lambda.clone());
        Ok(ll)
    }

    /// Stateless evaluation, usable from concurrent samplers.
    pub(crate) fn eval_cold(&self, theta: f64) -> retel_core::Result<LogLik> {
        let m = evaluate_moments(&MeanFunction::scalar(), &self.data, &[theta])?;
        self.spec.evaluate(&m, &self.data, &SolverSettings::default())
    }
}
