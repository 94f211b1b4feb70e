//! Area-level hierarchical model with a pseudo-likelihood for the sampling
//! stage:
//!
//! ```text
//! E[Y_i | θ_i] = θ_i,  Var[Y_i | θ_i] = 1
//! θ_i | β, σ² ~ N(X_iᵀβ, σ²)
//! β | σ²      ~ N(β₀, g σ² (XᵀX)⁻¹),  β₀ = OLS,  g = 0.1
//! π(σ²)       ∝ 1/σ²
//! ```
//!
//! The chain runs on `(θ₁, …, θ_n, β₁, β₂, log σ²)`.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use retel_core::inference::{credible_interval, run_chains, ChainSettings, Prior, Scales};
use retel_core::linalg::Matrix;
use retel_core::rng::{stream, StreamRng};
use retel_core::stats::{median, normal_logpdf};
use retel_core::{Dataset, LikelihoodSpec, Method, MomentMatrix, Regularization, SolverSettings};

use super::{mean_se, par_reps};
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::table::{Cell, ResultTable};

pub const G: f64 = 0.1;
const MIN_AREAS: usize = 3;

/// One row per area.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaData {
    pub y: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl AreaData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Reads a CSV with (at least) the columns `y`, `x1`, `x2`.
    pub fn from_reader(input: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| HarnessError::Ingestion {
                row: 1,
                column: name.into(),
                message: "missing column".into(),
            })
        };
        let idx = [col("y")?, col("x1")?, col("x2")?];
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| HarnessError::Ingestion { row, column: "*".into(), message: e.to_string() })?;
            for (k, name) in ["y", "x1", "x2"].iter().enumerate() {
                let cell = rec.get(idx[k]).unwrap_or("");
                let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                    HarnessError::Ingestion {
                        row,
                        column: (*name).into(),
                        message: format!("`{cell}` is not a finite number"),
                    }
                })?;
                cols[k].push(v);
            }
        }
        let [y, x1, x2] = cols;
        if y.len() < MIN_AREAS {
            return Err(HarnessError::Size { found: y.len(), needed: MIN_AREAS });
        }
        Ok(Self { y, x1, x2 })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Every column shifted and scaled to mean 0 and unit sample variance.
    pub fn standardized(&self) -> Result<Self> {
        let z = |v: &[f64], name: &str| -> Result<Vec<f64>> {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if !(sd > 0.0) {
                return Err(HarnessError::Ingestion {
                    row: 2,
                    column: name.into(),
                    message: "column is constant".into(),
                });
            }
            Ok(v.iter().map(|x| (x - m) / sd).collect())
        };
        Ok(Self { y: z(&self.y, "y")?, x1: z(&self.x1, "x1")?, x2: z(&self.x2, "x2")? })
    }

    /// A dataset drawn from the model on the raw scale: `X₂` is a noisy copy
    /// of `X₁`, `β = (1, 1)`, `σ² = 0.5`, `V = 1`.
    pub fn synthetic(areas: usize, rng: &mut StreamRng) -> Self {
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        let mut d = Self { y: Vec::new(), x1: Vec::new(), x2: Vec::new() };
        for _ in 0..areas {
            let x1 = z();
            let x2 = x1 + 0.3 * z();
            let theta = x1 + x2 + 0.5f64.sqrt() * z();
            d.y.push(theta + z());
            d.x1.push(x1);
            d.x2.push(x2);
        }
        d
    }

    fn x(&self, i: usize) -> [f64; 2] {
        [self.x1[i], self.x2[i]]
    }

    /// `(XᵀX)⁻¹` and the least-squares fit of `v` on `X`.
    fn ols(&self, v: &[f64]) -> Result<(Matrix, [f64; 2])> {
        let mut xtx = [0.0; 4];
        let mut xtv = [0.0; 2];
        for (i, vi) in v.iter().enumerate() {
            let x = self.x(i);
            for a in 0..2 {
                xtv[a] += x[a] * vi;
                for b in 0..2 {
                    xtx[2 * a + b] += x[a] * x[b];
                }
            }
        }
        let inv = Matrix::new(2, xtx.to_vec())?.cholesky()?.inverse();
        let beta = inv.mul_vec(&xtv);
        Ok((inv, [beta[0], beta[1]]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaMetrics {
    pub aad: f64,
    pub aard: f64,
    pub asd: f64,
    pub asrd: f64,
}

/// Absolute, relative, squared and squared-relative deviations of the
/// estimates from the direct estimates, averaged over areas.
pub fn area_metrics(theta_hat: &[f64], y: &[f64]) -> AreaMetrics {
    let n = y.len() as f64;
    let mut m = AreaMetrics { aad: 0.0, aard: 0.0, asd: 0.0, asrd: 0.0 };
    for (t, y) in theta_hat.iter().zip(y) {
        let d = t - y;
        m.aad += d.abs();
        m.asd += d * d;
        m.aard += (d / y).abs();
        m.asrd += (d / y).powi(2);
    }
    m.aad /= n;
    m.aard /= n;
    m.asd /= n;
    m.asrd /= n;
    m
}

#[derive(Debug, Clone)]
pub struct AreaFit {
    pub theta_hat: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub metrics: AreaMetrics,
    pub mean_length: f64,
    pub max_psrf: f64,
    pub acceptance: f64,
}

fn spec_for(method: Method, tau: f64) -> Result<LikelihoodSpec> {
    Ok(match method {
        Method::El => LikelihoodSpec::El,
        Method::Etel => LikelihoodSpec::Etel,
        Method::Aetel => LikelihoodSpec::Aetel { a_n: None },
        Method::RetelF => LikelihoodSpec::RetelF { reg: Regularization::sample_moments(tau)? },
        Method::RetelR => LikelihoodSpec::RetelR { reg: Regularization::sample_moments(tau)? },
        Method::Wetel => {
            return Err(HarnessError::Config("WETEL is not available for the small-area model".into()))
        }
    })
}

/// `g_i = (Y_i − θ_i, (Y_i − θ_i)² − 1)`.
fn moments(y: &[f64], theta: &[f64]) -> retel_core::Result<MomentMatrix> {
    let values = y
        .iter()
        .zip(theta)
        .flat_map(|(y, t)| {
            let e = y - t;
            [e, e * e - 1.0]
        })
        .collect();
    MomentMatrix::new(values, y.len(), 2, theta.to_vec())
}

/// Posterior summaries for one standardized dataset and one method.
pub fn fit_small_area(
    data: &AreaData,
    method: Method,
    cfg: &ExperimentConfig,
    stream_path: &[u64],
) -> Result<AreaFit> {
    let n = data.len();
    let tau = cfg.tau_rules[0].tau(n);
    let spec = spec_for(method, tau)?;
    let y_data = Dataset::from_scalars(&data.y)?;
    let (xtx_inv, beta0) = data.ols(&data.y)?;
    let prior = Prior::g_prior(beta0.to_vec(), G, &xtx_inv)?;
    let settings = SolverSettings::default();

    let target = |x: &[f64]| -> f64 {
        let (theta, rest) = x.split_at(n);
        let (beta, log_s2) = ([rest[0], rest[1]], rest[2]);
        let s2 = log_s2.exp();
        // The 1/σ² prior and the log-scale Jacobian cancel.
        let mut lp = prior.log_density(&[beta[0], beta[1], s2]);
        let sd = s2.sqrt();
        for (i, t) in theta.iter().enumerate() {
            let xi = data.x(i);
            lp += normal_logpdf(*t, xi[0] * beta[0] + xi[1] * beta[1], sd);
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        // A failed dual solve rejects the proposal.
        let ll = moments(&data.y, theta).and_then(|m| spec.evaluate(&m, &y_data, &settings));
        lp + ll.map_or(f64::NEG_INFINITY, |l| l.log_l)
    };

    // Start where the sample residuals have mean 0 and mean square 1.
    let (_, b) = data.ols(&data.y)?;
    let resid: Vec<f64> = (0..n).map(|i| data.y[i] - data.x(i)[0] * b[0] - data.x(i)[1] * b[1]).collect();
    let rms = (resid.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt().max(1e-8);
    let theta0: Vec<f64> = data.y.iter().zip(&resid).map(|(y, e)| y - e / rms).collect();
    let (_, beta_init) = data.ols(&theta0)?;
    let s2_init = (0..n)
        .map(|i| (theta0[i] - data.x(i)[0] * beta_init[0] - data.x(i)[1] * beta_init[1]).powi(2))
        .sum::<f64>()
        / n as f64;
    let mut centre = theta0;
    centre.extend_from_slice(&[beta_init[0], beta_init[1], s2_init.max(1e-3).ln()]);

    let mut path = stream_path.to_vec();
    path.push(u64::MAX);
    let mut jitter = stream(cfg.seed, &path);
    let inits: Vec<Vec<f64>> = (0..cfg.chains)
        .map(|_| {
            let x: Vec<f64> = centre
                .iter()
                .enumerate()
                .map(|(j, c)| c + if j < n { 0.05 } else { 0.1 } * jitter.sample::<f64, _>(StandardNormal))
                .collect();
            if target(&x) > f64::NEG_INFINITY { x } else { centre.clone() }
        })
        .collect();
    let mut initial = vec![0.1; n];
    initial.extend_from_slice(&[0.05, 0.05, 0.1]);
    let chain_settings = ChainSettings {
        steps: cfg.steps,
        burn_in: None,
        scales: Scales::Pilot { initial, steps: cfg.pilot_steps, rounds: 4 },
        seed: cfg.seed,
        stream_path: stream_path.to_vec(),
    };
    let post = run_chains(target, &inits, &chain_settings)?;

    let mut theta_hat = Vec::with_capacity(n);
    let mut intervals = Vec::with_capacity(n);
    for i in 0..n {
        let draws = post.pooled(i);
        theta_hat.push(median(&draws));
        intervals.push(credible_interval(&draws, cfg.level)?);
    }
    let mean_length = intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / n as f64;
    Ok(AreaFit {
        metrics: area_metrics(&theta_hat, &data.y),
        theta_hat,
        intervals,
        mean_length,
        max_psrf: post.max_psrf(),
        acceptance: post.acceptance_rate.iter().sum::<f64>() / post.acceptance_rate.len() as f64,
    })
}

/// Fits every configured method to the CSV at `cfg.input` or, without one, to
/// `cfg.reps` synthetic datasets.
pub fn run_small_area(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.experiment != Experiment::SmallArea {
        return Err(HarnessError::Config(format!("expected a small_area config, got {}", cfg.experiment)));
    }
    cfg.validate()?;
    for &m in &cfg.methods {
        spec_for(m, 1.0)?;
    }
    let raw: Vec<AreaData> = match &cfg.input {
        Some(path) => vec![AreaData::from_path(path)?],
        None => (0..cfg.reps).map(|k| AreaData::synthetic(cfg.areas, &mut stream(cfg.seed, &[0, k as u64]))).collect(),
    };
    let data = raw.iter().map(AreaData::standardized).collect::<Result<Vec<_>>>()?;
    let nm = cfg.methods.len();
    let fits = par_reps(data.len() * nm, |job| {
        let (k, mi) = (job / nm, job % nm);
        fit_small_area(&data[k], cfg.methods[mi], cfg, &[1, k as u64, mi as u64])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let name = cfg.experiment.name();
    let single = data.len() == 1;
    let mut table = ResultTable::default();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let n = data[0].len();
        let cell = Cell { n: Some(n), tau: method.is_regularized().then(|| cfg.tau_rules[0].tau(n)), ..Cell::default() };
        let m = method.name();
        let per: Vec<&AreaFit> = (0..data.len()).map(|k| &fits[k * nm + mi]).collect();
        let summary = |f: &AreaFit| {
            [
                ("aad", f.metrics.aad),
                ("aard", f.metrics.aard),
                ("asd", f.metrics.asd),
                ("asrd", f.metrics.asrd),
                ("length", f.mean_length),
                ("max_psrf", f.max_psrf),
                ("psrf_warning", f64::from(u8::from(f.max_psrf >= 1.1))),
                ("acceptance", f.acceptance),
            ]
        };
        if single {
            let f = per[0];
            for (metric, v) in summary(f) {
                table.push(name, &cell, m, metric, v, None);
            }
            for (i, (t, (lo, hi))) in f.theta_hat.iter().zip(&f.intervals).enumerate() {
                table.push(name, &cell, m, &format!("theta_hat@area={}", i + 1), *t, None);
                table.push(name, &cell, m, &format!("ci_lo@area={}", i + 1), *lo, None);
                table.push(name, &cell, m, &format!("ci_hi@area={}", i + 1), *hi, None);
            }
        } else {
            let rows: Vec<_> = per.iter().map(|f| summary(f)).collect();
            for j in 0..rows[0].len() {
                let metric = rows[0][j].0;
                let vals: Vec<f64> = rows.iter().map(|r| r[j].1).collect();
                let (mean, se) = mean_se(&vals);
                table.push(name, &cell, m, metric, mean, Some(se));
            }
            for (k, r) in rows.iter().enumerate() {
                for (metric, v) in r {
                    table.push(name, &cell, m, &format!("{metric}@dataset={}", k + 1), *v, None);
                }
            }
        }
    }
    Ok(table)
}
