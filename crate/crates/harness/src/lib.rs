//! Configurable batch runner for the simulation studies of the `retel-core`
//! library. Every experiment returns a long-format [`ResultTable`] whose CSV
//! form has the header `experiment,n,s,l,tau,method,metric,value,se`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod table;

pub use config::{Experiment, ExperimentConfig, PenaltyPreset, TauRule};
pub use error::{HarnessError, Result};
pub use table::{ResultTable, Row};

/// Runs `cfg` on a pool of `cfg.threads` workers.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.experiment {
        Experiment::Uniformity => experiments::run_uniformity(cfg),
        Experiment::Coverage => experiments::run_coverage(cfg),
        Experiment::Kl => experiments::run_kl(cfg),
        Experiment::LambdaConvergence => experiments::run_lambda_convergence(cfg),
        Experiment::LogratioCurve => experiments::run_logratio_curve(cfg),
        Experiment::Wilks => experiments::run_wilks(cfg),
        Experiment::SmallArea => experiments::run_small_area(cfg),
    })
}
