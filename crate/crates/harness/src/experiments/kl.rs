//! Expected prior-to-posterior KL divergence in a two-group hierarchical
//! model: `X_ij ~ N(θ_i, 1)`, `θ_i | μ ~ Cauchy(μ, 1)`, `μ ~ N(0, 10²)`, with
//! the group likelihoods replaced by pseudo-likelihoods of the mean.

use rand::Rng;
use rand_distr::StandardNormal;
use retel_core::inference::{run_chains, ChainSettings, Scales};
use retel_core::rng::stream;
use retel_core::stats::{cauchy_logpdf, kde, kl_between, normal_logpdf, silverman_bandwidth};
use retel_core::Regularization;

use super::{mean_se, mean_spec, normal_draws, par_reps, MeanLik};
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::table::{fmt_g6, Cell, ResultTable};

const GROUP_MEANS: [f64; 2] = [-3.0, 3.0];
const PRIOR_SD: f64 = 10.0;
const KDE_POINTS: usize = 1024;
const DENSITY_POINTS: usize = 201;

struct Replicate {
    kl: f64,
    psrf: f64,
    density: Option<Vec<(f64, f64)>>,
}

pub fn run_kl(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.experiment != Experiment::Kl {
        return Err(HarnessError::Config(format!("expected a kl config, got {}", cfg.experiment)));
    }
    cfg.validate()?;
    let name = cfg.experiment.name();
    let mut table = ResultTable::default();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        for (ti, rule) in cfg.tau_rules.iter().enumerate() {
            let tau = rule.tau(n);
            let cell_index = (ni * cfg.tau_rules.len() + ti) as u64;
            let res: Vec<Result<Vec<Replicate>>> = par_reps(cfg.reps, |rep| {
                let mut rng = stream(cfg.seed, &[cell_index, rep as u64]);
                let groups: Vec<Vec<f64>> = GROUP_MEANS.iter().map(|&m| normal_draws(&mut rng, n, m)).collect();
                cfg.methods
                    .iter()
                    .enumerate()
                    .map(|(mi, &method)| {
                        let reg = method.is_regularized().then(|| Regularization::invariant_mean(tau)).transpose()?;
                        let liks = groups
                            .iter()
                            .map(|g| MeanLik::new(g, mean_spec(method, reg.clone(), cfg.wetel_m)?))
                            .collect::<Result<Vec<_>>>()?;
                        one_replicate(cfg, &groups, &liks, [cell_index, rep as u64, mi as u64], rep == 0)
                    })
                    .collect()
            });
            let res = res.into_iter().collect::<Result<Vec<_>>>()?;
            for (mi, method) in cfg.methods.iter().enumerate() {
                let cell = Cell {
                    n: Some(n),
                    tau: method.is_regularized().then_some(tau),
                    ..Cell::default()
                };
                let kls: Vec<f64> = res.iter().map(|r| r[mi].kl).collect();
                let psrfs: Vec<f64> = res.iter().map(|r| r[mi].psrf).collect();
                let (ekl, se) = mean_se(&kls);
                let (psrf, _) = mean_se(&psrfs);
                let m = method.name();
                table.push(name, &cell, m, "ekl", ekl, Some(se));
                table.push(name, &cell, m, "mean_max_psrf", psrf, None);
                table.push(name, &cell, m, "psrf_warning", f64::from(u8::from(psrf > 1.1)), None);
                if cfg.emit_density {
                    for &(mu, d) in res[0][mi].density.as_deref().unwrap_or_default() {
                        table.push(name, &cell, m, &format!("density@mu={}", fmt_g6(mu)), d, None);
                    }
                }
            }
        }
    }
    Ok(table)
}

fn one_replicate(
    cfg: &ExperimentConfig,
    groups: &[Vec<f64>],
    liks: &[MeanLik],
    key: [u64; 3],
    keep_density: bool,
) -> Result<Replicate> {
    let n = groups[0].len();
    // Parameter vector (θ₁, θ₂, μ).
    let target = |x: &[f64]| -> f64 {
        let mut lp = normal_logpdf(x[2], 0.0, PRIOR_SD);
        for (i, lik) in liks.iter().enumerate() {
            lp += cauchy_logpdf(x[i], x[2], 1.0);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            // A failed dual solve rejects the proposal.
            lp += lik.eval_cold(x[i]).map_or(f64::NEG_INFINITY, |ll| ll.log_l);
        }
        lp
    };
    let xbar: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / n as f64).collect();
    let centre = vec![xbar[0], xbar[1], 0.5 * (xbar[0] + xbar[1])];
    let mut jitter_rng = stream(cfg.seed, &[key[0], key[1], key[2], u64::MAX]);
    let spread = 0.1 / (n as f64).sqrt();
    let inits: Vec<Vec<f64>> = (0..cfg.chains)
        .map(|_| {
            let z: [f64; 3] = std::array::from_fn(|_| jitter_rng.sample(StandardNormal));
            let x = vec![centre[0] + spread * z[0], centre[1] + spread * z[1], centre[2] + z[2]];
            if target(&x) > f64::NEG_INFINITY { x } else { centre.clone() }
        })
        .collect();
    let step = 1.0 / (n as f64).sqrt();
    let settings = ChainSettings {
        steps: cfg.steps,
        burn_in: None,
        scales: Scales::Pilot { initial: vec![step, step, 2.0], steps: cfg.pilot_steps, rounds: 3 },
        seed: cfg.seed,
        stream_path: key.to_vec(),
    };
    let post = run_chains(target, &inits, &settings)?;
    let mu = post.pooled(2);
    let h = silverman_bandwidth(&mu)?;
    let (lo, hi) = mu.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = (lo - 5.0 * h, hi + 5.0 * h);
    let grid: Vec<f64> =
        (0..KDE_POINTS).map(|k| lo + (hi - lo) * k as f64 / (KDE_POINTS - 1) as f64).collect();
    let dens = kde(&mu, &grid)?;
    let kl = kl_between(&dens, |t| normal_logpdf(t, 0.0, PRIOR_SD), &grid, 1e-6)?;
    let density = keep_density.then(|| {
        (0..DENSITY_POINTS)
            .map(|k| {
                let t = lo + (hi - lo) * k as f64 / (DENSITY_POINTS - 1) as f64;
                (t, dens.eval(t))
            })
            .collect()
    });
    Ok(Replicate { kl, psrf: post.max_psrf(), density })
}
