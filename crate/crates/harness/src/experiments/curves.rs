//! Deterministic curves on fixed toy data.

use retel_core::likelihood::log_retel;
use retel_core::model::{evaluate_moments, MeanFunction, PseudoData};
use retel_core::solver::{solve_retel, solve_wetel};
use retel_core::stats::normal_quantiles;
use retel_core::{Dataset, Method, Regularization, SolverSettings};

use super::par_reps;
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::table::{fmt_g6, Cell, ResultTable};

fn check(cfg: &ExperimentConfig, want: Experiment) -> Result<()> {
    if cfg.experiment != want {
        return Err(HarnessError::Config(format!("expected a {want} config, got {}", cfg.experiment)));
    }
    cfg.validate()
}

/// Observations `{−2, 2}`: the WETEL multiplier with `m = 2^k` quantile
/// pseudo-points against the centred RETEL multiplier.
pub fn run_lambda_convergence(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check(cfg, Experiment::LambdaConvergence)?;
    let name = cfg.experiment.name();
    let data = Dataset::from_scalars(&[-2.0, 2.0])?;
    let s = SolverSettings::default();
    let mut table = ResultTable::default();
    for rule in &cfg.tau_rules {
        let tau = rule.tau(data.n());
        let reg = Regularization::centered(tau)?;
        for &theta in &cfg.theta_values {
            let m = evaluate_moments(&MeanFunction::scalar(), &data, &[theta])?;
            let lambda_ret = solve_retel(&m, &reg, &data, &s)?.lambda[0];
            let suffix = format!("@theta={}", fmt_g6(theta));
            let rows = par_reps(cfg.m_exp_max as usize, |k| -> Result<(usize, f64)> {
                let mm = 1usize << (k + 1);
                let pseudo = PseudoData::new(normal_quantiles(mm), mm, 1)?;
                let sol = solve_wetel(&m, &pseudo, &s)?;
                Ok((mm, if sol.is_converged() { sol.lambda[0] } else { f64::NAN }))
            });
            for row in rows {
                let (mm, lambda_wet) = row?;
                let cell = Cell { n: Some(mm), tau: Some(tau), ..Cell::default() };
                table.push(name, &cell, Method::Wetel.name(), &format!("lambda{suffix}"), lambda_wet, None);
                table.push(name, &cell, "RETEL", &format!("lambda{suffix}"), lambda_ret, None);
                table.push(name, &cell, "WETEL-RETEL", &format!("gap{suffix}"), (lambda_wet - lambda_ret).abs(), None);
            }
        }
    }
    Ok(table)
}

/// The θ grid over `[−3, 3]` with `points` nodes; odd counts hit 0 exactly.
pub fn logratio_grid(points: usize) -> Vec<f64> {
    let d = (points - 1) as i64;
    (0..points as i64).map(|k| 6.0 * (2 * k - d) as f64 / (2 * d) as f64).collect()
}

/// Single observation at 0 with `μ = −θ`, `Σ = 1`: both regularized
/// log-ratio curves for each τ, and the largest gap between them.
pub fn run_logratio_curve(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check(cfg, Experiment::LogratioCurve)?;
    let name = cfg.experiment.name();
    let data = Dataset::from_scalars(&[0.0])?;
    let grid = logratio_grid(cfg.grid_points);
    let s = SolverSettings::default();
    let mut table = ResultTable::default();
    for rule in &cfg.tau_rules {
        let tau = rule.tau(1);
        let reg = Regularization::neg_theta(tau)?;
        let curves = par_reps(grid.len(), |k| -> Result<(f64, f64)> {
            let m = evaluate_moments(&MeanFunction::scalar(), &data, &[grid[k]])?;
            let f = log_retel(&m, &reg, &data, Method::RetelF, &s)?;
            let r = log_retel(&m, &reg, &data, Method::RetelR, &s)?;
            Ok((f.log_r, r.log_r))
        });
        let cell = Cell { n: Some(1), tau: Some(tau), ..Cell::default() };
        let mut max_gap = 0.0f64;
        for (theta, c) in grid.iter().zip(curves) {
            let (f, r) = c?;
            let metric = format!("log_r@theta={}", fmt_g6(*theta));
            table.push(name, &cell, Method::RetelF.name(), &metric, f, None);
            table.push(name, &cell, Method::RetelR.name(), &metric, r, None);
            max_gap = max_gap.max((f - r).abs());
        }
        table.push(name, &cell, "RETEL", "max_gap", max_gap, None);
    }
    Ok(table)
}
