//! Studies on the scalar mean model with a logistic prior: calibration of the
//! posterior (Monahan–Boos H), credible interval coverage, and the limiting
//! distribution of the log-ratio statistic.

use rand::Rng;
use retel_core::inference::{adaptive_grid_posterior, monahan_boos_h, AdaptiveGrid, GridPosterior, Prior};
use retel_core::likelihood::log_retel_pair;
use retel_core::model::{evaluate_moments, MeanFunction};
use retel_core::rng::{stream, StreamRng};
use retel_core::stats::{chisq_cdf, ks_test, ks_uniform, logistic_quantile, median};
use retel_core::{Dataset, Method, Regularization, SolverSettings};

use super::{mean_se, mean_spec, normal_draws, par_reps, MeanLik};
use crate::config::{Experiment, ExperimentConfig, PenaltyPreset, TauRule};
use crate::error::{HarnessError, Result};
use crate::table::{Cell, ResultTable};

/// One (τ rule, method) combination; methods without a penalty appear once.
#[derive(Debug, Clone, Copy)]
struct Slot {
    tau: Option<TauRule>,
    method: Method,
}

fn slots(cfg: &ExperimentConfig) -> Vec<Slot> {
    let mut out = Vec::new();
    for (t, &rule) in cfg.tau_rules.iter().enumerate() {
        for &method in &cfg.methods {
            if method.is_regularized() {
                out.push(Slot { tau: Some(rule), method });
            } else if t == 0 {
                out.push(Slot { tau: None, method });
            }
        }
    }
    out
}

fn draw_logistic(rng: &mut StreamRng, location: f64, scale: f64) -> Result<f64> {
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    Ok(logistic_quantile(u, location, scale)?)
}

fn posterior(cfg: &ExperimentConfig, xs: &[f64], slot: Slot, prior: &Prior, s: f64) -> Result<GridPosterior> {
    let n = xs.len();
    let reg = slot.tau.map(|rule| Regularization::invariant_mean(rule.tau(n))).transpose()?;
    let mut lik = MeanLik::new(xs, mean_spec(slot.method, reg, cfg.wetel_m)?)?;
    let xbar = xs.iter().sum::<f64>() / n as f64;
    let grid = AdaptiveGrid { points: cfg.grid_points, ..AdaptiveGrid::for_mean(xbar, s, n) };
    Ok(adaptive_grid_posterior(|t| Ok(prior.log_density(&[t]) + lik.eval(t)?.log_l), &grid)?)
}

struct MeanCell {
    index: u64,
    n: usize,
    s: f64,
    l: f64,
}

fn mean_cells(cfg: &ExperimentConfig) -> Vec<MeanCell> {
    let mut cells = Vec::new();
    for &n in &cfg.n_values {
        for &s in &cfg.s_values {
            for &l in &cfg.l_values {
                cells.push(MeanCell { index: cells.len() as u64, n, s, l });
            }
        }
    }
    cells
}

fn table_cell(c: &MeanCell, slot: Slot) -> Cell {
    Cell { n: Some(c.n), s: Some(c.s), l: Some(c.l), tau: slot.tau.map(|r| r.tau(c.n)) }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn check(cfg: &ExperimentConfig, want: Experiment) -> Result<()> {
    if cfg.experiment != want {
        return Err(HarnessError::Config(format!("expected a {want} config, got {}", cfg.experiment)));
    }
    cfg.validate()
}

/// θ from the logistic prior, data from `N(θ, 1)`, and `H = F(θ | X)` for
/// every method; uniformity of `H` is tested per cell.
pub fn run_uniformity(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check(cfg, Experiment::Uniformity)?;
    let name = cfg.experiment.name();
    let slots = slots(cfg);
    let mut table = ResultTable::default();
    let meta = Cell::default();
    table.push(name, &meta, "grid", "points", cfg.grid_points as f64, None);
    table.push(name, &meta, "grid", "half_width_per_sd", 6.0, None);
    table.push(name, &meta, "grid", "tail_tol", AdaptiveGrid::for_mean(0.0, 1.0, 1).tail_tol, None);
    for cell in mean_cells(cfg) {
        let prior = Prior::logistic(cell.l, cell.s)?;
        let hs = collect(par_reps(cfg.reps, |rep| -> Result<Vec<f64>> {
            let mut rng = stream(cfg.seed, &[cell.index, rep as u64]);
            let theta = draw_logistic(&mut rng, cell.l, cell.s)?;
            let xs = normal_draws(&mut rng, cell.n, theta);
            slots
                .iter()
                .map(|&slot| Ok(monahan_boos_h(&posterior(cfg, &xs, slot, &prior, cell.s)?, theta)))
                .collect()
        }))?;
        for (k, &slot) in slots.iter().enumerate() {
            let mut h: Vec<f64> = hs.iter().map(|v| v[k].clamp(0.0, 1.0)).collect();
            let ks = ks_uniform(&h)?;
            let tc = table_cell(&cell, slot);
            let m = slot.method.name();
            table.push(name, &tc, m, "ks_stat", ks.statistic, None);
            table.push(name, &tc, m, "ks_p", ks.p_value, None);
            h.sort_by(f64::total_cmp);
            for v in h {
                table.push(name, &tc, m, "h_sorted", v, None);
            }
        }
    }
    Ok(table)
}

/// Data from `N(0, 1)`; central credible intervals at `cfg.level` and whether
/// they cover 0.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check(cfg, Experiment::Coverage)?;
    let name = cfg.experiment.name();
    let slots = slots(cfg);
    let mut table = ResultTable::default();
    for cell in mean_cells(cfg) {
        let prior = Prior::logistic(cell.l, cell.s)?;
        let res = collect(par_reps(cfg.reps, |rep| -> Result<Vec<(f64, f64)>> {
            let mut rng = stream(cfg.seed, &[cell.index, rep as u64]);
            let xs = normal_draws(&mut rng, cell.n, 0.0);
            slots
                .iter()
                .map(|&slot| {
                    let (lo, hi) = posterior(cfg, &xs, slot, &prior, cell.s)?.credible_interval(cfg.level);
                    Ok((f64::from(u8::from(lo <= 0.0 && 0.0 <= hi)), hi - lo))
                })
                .collect()
        }))?;
        for (k, &slot) in slots.iter().enumerate() {
            let tc = table_cell(&cell, slot);
            let hit: Vec<f64> = res.iter().map(|v| v[k].0).collect();
            let len: Vec<f64> = res.iter().map(|v| v[k].1).collect();
            let (cr, cr_se) = mean_se(&hit);
            let (ml, ml_se) = mean_se(&len);
            table.push(name, &tc, slot.method.name(), "cr", cr, Some(cr_se));
            table.push(name, &tc, slot.method.name(), "length", ml, Some(ml_se));
        }
    }
    Ok(table)
}

fn wilks_regularization(preset: PenaltyPreset, tau: f64) -> Result<Regularization> {
    Ok(match preset {
        PenaltyPreset::InvariantMean => Regularization::invariant_mean(tau)?,
        PenaltyPreset::Centered => Regularization::centered(tau)?,
        PenaltyPreset::Constant(mu) => Regularization::constant(tau, vec![mu], vec![1.0])?,
    })
}

/// `−2 log R(0)` under `N(0, 1)` data against `χ²₁`, plus the median gap
/// `|log R_f − log R_r|` between the two regularized variants.
pub fn run_wilks(cfg: &ExperimentConfig) -> Result<ResultTable> {
    check(cfg, Experiment::Wilks)?;
    let name = cfg.experiment.name();
    let slots = slots(cfg);
    let has_retel = cfg.methods.iter().any(|m| m.is_regularized());
    let mut table = ResultTable::default();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        // Per replicate: one statistic per slot, then one gap per τ rule.
        let res = collect(par_reps(cfg.reps, |rep| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut rng = stream(cfg.seed, &[ni as u64, rep as u64]);
            let xs = normal_draws(&mut rng, n, 0.0);
            let data = Dataset::from_scalars(&xs)?;
            let m = evaluate_moments(&MeanFunction::scalar(), &data, &[0.0])?;
            let mut pairs = Vec::new();
            if has_retel {
                for rule in &cfg.tau_rules {
                    let pen = wilks_regularization(cfg.penalty, rule.tau(n))?.resolve(&data, &m)?;
                    pairs.push(log_retel_pair(&m, &pen, &SolverSettings::default())?);
                }
            }
            let mut stats = Vec::with_capacity(slots.len());
            for slot in &slots {
                let log_r = match (slot.method, slot.tau) {
                    (Method::RetelF | Method::RetelR, Some(rule)) => {
                        let t = cfg.tau_rules.iter().position(|r| *r == rule).expect("rule from config");
                        let (f, r) = &pairs[t];
                        if slot.method == Method::RetelF { f.log_r } else { r.log_r }
                    }
                    _ => MeanLik::new(&xs, mean_spec(slot.method, None, cfg.wetel_m)?)?.eval(0.0)?.log_r,
                };
                stats.push(-2.0 * log_r);
            }
            let gaps = pairs.iter().map(|(f, r)| (f.log_r - r.log_r).abs()).collect();
            Ok((stats, gaps))
        }))?;
        let cell_for = |tau: Option<f64>| Cell { n: Some(n), tau, ..Cell::default() };
        for (k, slot) in slots.iter().enumerate() {
            let tc = cell_for(slot.tau.map(|r| r.tau(n)));
            let stats: Vec<f64> = res.iter().map(|(s, _)| s[k]).collect();
            let violations = stats.iter().filter(|s| !s.is_finite()).count();
            let ks = ks_test(&stats, |x| if x.is_finite() { chisq_cdf(x, 1.0) } else { 1.0 })?;
            let m = slot.method.name();
            table.push(name, &tc, m, "ks_stat", ks.statistic, None);
            table.push(name, &tc, m, "ks_p", ks.p_value, None);
            table.push(name, &tc, m, "hull_violations", violations as f64, None);
        }
        if has_retel {
            for (t, rule) in cfg.tau_rules.iter().enumerate() {
                let gaps: Vec<f64> = res.iter().map(|(_, g)| g[t]).collect();
                table.push(name, &cell_for(Some(rule.tau(n))), "RETEL", "median_variant_gap", median(&gaps), None);
            }
        }
    }
    Ok(table)
}
