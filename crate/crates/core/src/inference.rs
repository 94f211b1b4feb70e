//! Priors, posterior assembly, random-walk Metropolis–Hastings, grid
//! posteriors and coverage diagnostics.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::LogLik;
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{stream, StreamRng};
use crate::stats::{self, logistic_logpdf};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multivariate normal density with a cached factorization.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    chol: Cholesky,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: &Matrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Input("mean and covariance dimensions differ".into()));
        }
        if !cov.is_symmetric(1e-12) {
            return Err(Error::Input("covariance must be symmetric".into()));
        }
        Ok(Self { mean, chol: cov.cholesky()? })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density of `N(mean, scale·cov)` at `x`.
    pub fn log_pdf_scaled(&self, x: &[f64], scale: f64) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let z = self.chol.solve_lower(&d);
        let k = self.dim() as f64;
        -0.5 * z.iter().map(|v| v * v).sum::<f64>() / scale
            - 0.5 * self.chol.log_det()
            - 0.5 * k * (scale.ln() + LN_2PI)
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf_scaled(x, 1.0)
    }
}

#[derive(Debug, Clone)]
pub enum Prior {
    /// Constant log density 0 (improper).
    Flat,
    /// Scalar logistic prior on the first coordinate.
    Logistic { location: f64, scale: f64 },
    Normal(Gaussian),
    /// `β | σ² ~ N(β₀, g σ² (XᵀX)⁻¹)` on the parameter `(β, σ²)`.
    GPrior { base: Gaussian, g: f64 },
    /// `π(σ²) ∝ 1/σ²` on the first coordinate.
    ImproperInvVar,
}

impl Prior {
    pub fn logistic(location: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !location.is_finite() {
            return Err(Error::Input("logistic prior needs a finite location and positive scale".into()));
        }
        Ok(Self::Logistic { location, scale })
    }

    pub fn normal(mean: Vec<f64>, cov: &Matrix) -> Result<Self> {
        Ok(Self::Normal(Gaussian::new(mean, cov)?))
    }

    pub fn g_prior(beta0: Vec<f64>, g: f64, xtx_inv: &Matrix) -> Result<Self> {
        if !(g > 0.0) {
            return Err(Error::Input("g must be positive".into()));
        }
        Ok(Self::GPrior { base: Gaussian::new(beta0, xtx_inv)?, g })
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            Self::Flat => 0.0,
            Self::Logistic { location, scale } => logistic_logpdf(theta[0], *location, *scale),
            Self::Normal(gauss) => gauss.log_pdf(theta),
            Self::GPrior { base, g } => {
                let k = base.dim();
                let sigma2 = theta[k];
                if sigma2 > 0.0 {
                    base.log_pdf_scaled(&theta[..k], g * sigma2)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::ImproperInvVar => {
                if theta[0] > 0.0 {
                    -theta[0].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// `log π(θ) + log L(θ)`, `−∞` if either term is.
pub fn log_posterior(
    prior: &Prior,
    loglik_fn: impl Fn(&[f64]) -> Result<LogLik>,
    theta: &[f64],
) -> Result<f64> {
    let lp = prior.log_density(theta);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lp + loglik_fn(theta)?.log_l)
}

/// A single Metropolis chain; `draws` is `steps × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<f64>,
    pub dim: usize,
    pub accepted: usize,
}

impl Chain {
    pub fn steps(&self) -> usize {
        self.draws.len() / self.dim.max(1)
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.steps().max(1) as f64
    }

    pub fn last(&self) -> &[f64] {
        &self.draws[self.draws.len() - self.dim..]
    }

    pub fn coordinate(&self, j: usize, skip: usize) -> Vec<f64> {
        self.draws.chunks(self.dim).skip(skip).map(|r| r[j]).collect()
    }
}

/// Random-walk Metropolis–Hastings with independent Gaussian increments.
pub fn rwmh(
    target: impl Fn(&[f64]) -> f64,
    init: &[f64],
    steps: usize,
    proposal_scale: &[f64],
    rng: &mut StreamRng,
) -> Result<Chain> {
    let dim = init.len();
    if proposal_scale.len() != dim || proposal_scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Input("one positive proposal scale per coordinate is required".into()));
    }
    let mut current = init.to_vec();
    let mut lp = target(&current);
    if !(lp > f64::NEG_INFINITY) {
        return Err(Error::Initialization { chain: 0 });
    }
    let mut proposal = vec![0.0; dim];
    let mut draws = Vec::with_capacity(steps * dim);
    let mut accepted = 0;
    for _ in 0..steps {
        for ((p, c), s) in proposal.iter_mut().zip(&current).zip(proposal_scale) {
            let z: f64 = rng.sample(StandardNormal);
            *p = c + s * z;
        }
        let lq = target(&proposal);
        let u: f64 = rng.random();
        if lq > f64::NEG_INFINITY && u.ln() < lq - lp {
            current.copy_from_slice(&proposal);
            lp = lq;
            accepted += 1;
        }
        draws.extend_from_slice(&current);
    }
    Ok(Chain { draws, dim, accepted })
}

/// Short pilot runs that set the proposal scale to `2.4/√d` times the pilot
/// standard deviation. Returns the scales and the final pilot state.
pub fn tune_scales(
    target: impl Fn(&[f64]) -> f64,
    init: &[f64],
    initial_scales: &[f64],
    pilot_steps: usize,
    rounds: usize,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = init.len();
    let factor = 2.4 / (dim as f64).sqrt();
    let mut scales = initial_scales.to_vec();
    let mut state = init.to_vec();
    for _ in 0..rounds {
        let chain = rwmh(&target, &state, pilot_steps, &scales, rng)?;
        let rate = chain.acceptance_rate();
        for (j, s) in scales.iter_mut().enumerate() {
            let sd = stats::variance(&chain.coordinate(j, pilot_steps / 2)).sqrt();
            *s = if rate > 0.02 && sd > 0.0 && sd.is_finite() {
                factor * sd
            } else {
                *s * 0.3
            };
        }
        state = chain.last().to_vec();
    }
    Ok((scales, state))
}

#[derive(Debug, Clone)]
pub enum Scales {
    Fixed(Vec<f64>),
    /// Pilot tuning starting from the given scales.
    Pilot { initial: Vec<f64>, steps: usize, rounds: usize },
}

#[derive(Debug, Clone)]
pub struct ChainSettings {
    pub steps: usize,
    /// Defaults to `steps / 2`.
    pub burn_in: Option<usize>,
    pub scales: Scales,
    pub seed: u64,
    /// Prefix of the random stream key; the chain index is appended.
    pub stream_path: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub chains: Vec<Chain>,
    pub acceptance_rate: Vec<f64>,
    pub psrf: Vec<f64>,
    pub burn_in: usize,
    pub scales: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    pub fn dim(&self) -> usize {
        self.chains[0].dim
    }

    /// Post-burn-in draws of coordinate `j`, pooled over chains.
    pub fn pooled(&self, j: usize) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.coordinate(j, self.burn_in)).collect()
    }

    pub fn max_psrf(&self) -> f64 {
        self.psrf.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs one chain per initial point in parallel, each on its own random stream.
pub fn run_chains<F>(target: F, inits: &[Vec<f64>], settings: &ChainSettings) -> Result<PosteriorSamples>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if inits.is_empty() || settings.steps < 4 {
        return Err(Error::Input("need at least one chain and four steps".into()));
    }
    let burn_in = settings.burn_in.unwrap_or(settings.steps / 2);
    if burn_in + 4 > settings.steps {
        return Err(Error::Input("burn-in leaves too few draws".into()));
    }
    let results: Vec<Result<(Chain, Vec<f64>)>> = inits
        .par_iter()
        .enumerate()
        .map(|(c, init)| {
            let mut path = settings.stream_path.clone();
            path.push(c as u64);
            let mut rng = stream(settings.seed, &path);
            let relabel = |e: Error| match e {
                Error::Initialization { .. } => Error::Initialization { chain: c },
                other => other,
            };
            let (scales, start) = match &settings.scales {
                Scales::Fixed(s) => (s.clone(), init.clone()),
                Scales::Pilot { initial, steps, rounds } => {
                    tune_scales(&target, init, initial, *steps, *rounds, &mut rng).map_err(relabel)?
                }
            };
            let chain = rwmh(&target, &start, settings.steps, &scales, &mut rng).map_err(relabel)?;
            Ok((chain, scales))
        })
        .collect();
    let mut chains = Vec::with_capacity(inits.len());
    let mut scales = Vec::with_capacity(inits.len());
    for r in results {
        let (c, s) = r?;
        chains.push(c);
        scales.push(s);
    }
    let dim = chains[0].dim;
    let psrf = (0..dim)
        .map(|j| {
            let seqs: Vec<Vec<f64>> = chains.iter().map(|c| c.coordinate(j, burn_in)).collect();
            split_psrf(&seqs)
        })
        .collect();
    let acceptance_rate = chains.iter().map(Chain::acceptance_rate).collect();
    Ok(PosteriorSamples { chains, acceptance_rate, psrf, burn_in, scales })
}

/// Gelman–Rubin potential scale reduction over equal-length sequences.
pub fn gelman_rubin(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len();
    let l = seqs.iter().map(Vec::len).min().unwrap_or(0);
    if m < 2 || l < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = seqs.iter().map(|s| stats::mean(&s[..l])).collect();
    let w = seqs.iter().map(|s| stats::variance(&s[..l])).sum::<f64>() / m as f64;
    let b_over_l = stats::variance(&means);
    let lf = l as f64;
    if w == 0.0 {
        return if b_over_l == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((lf - 1.0) / lf * w + b_over_l) / w).sqrt()
}

/// Split-chain variant: each sequence is halved before [`gelman_rubin`].
pub fn split_psrf(seqs: &[Vec<f64>]) -> f64 {
    let halves: Vec<Vec<f64>> = seqs
        .iter()
        .flat_map(|s| {
            let h = s.len() / 2;
            [s[..h].to_vec(), s[s.len() - h..].to_vec()]
        })
        .collect();
    gelman_rubin(&halves)
}

/// Equal-tailed interval from empirical quantiles.
pub fn credible_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Input("no samples".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level {level} outside (0, 1)")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok((stats::quantile_sorted(&s, (1.0 - level) / 2.0), stats::quantile_sorted(&s, (1.0 + level) / 2.0)))
}

/// A density tabulated on a grid and normalized by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    grid: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GridPosterior {
    /// Builds the posterior from unnormalized log densities.
    pub fn from_log_density(grid: Vec<f64>, log_density: &[f64]) -> Result<Self> {
        if grid.len() < 3 || grid.len() != log_density.len() {
            return Err(Error::Input("grid posterior needs at least 3 points with matching values".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("grid must be strictly increasing".into()));
        }
        let top = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(Error::EmptyPosterior);
        }
        if !top.is_finite() {
            return Err(Error::Input("log density is not finite".into()));
        }
        let raw: Vec<f64> = log_density.iter().map(|l| (l - top).exp()).collect();
        let mut cumulative = vec![0.0; grid.len()];
        for k in 1..grid.len() {
            cumulative[k] = cumulative[k - 1] + 0.5 * (grid[k] - grid[k - 1]) * (raw[k] + raw[k - 1]);
        }
        let mass = cumulative[grid.len() - 1];
        let density = raw.iter().map(|d| d / mass).collect();
        cumulative.iter_mut().for_each(|c| *c /= mass);
        Ok(Self { grid, density, cumulative })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn mass(&self) -> f64 {
        stats::trapezoid(&self.grid, &self.density)
    }

    /// CDF of the piecewise-linear density; 0 and 1 outside the grid.
    pub fn cdf(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= g[0] {
            return 0.0;
        }
        if t >= g[g.len() - 1] {
            return 1.0;
        }
        let k = g.partition_point(|&x| x <= t) - 1;
        let h = t - g[k];
        let slope = (self.density[k + 1] - self.density[k]) / (g[k + 1] - g[k]);
        (self.cumulative[k] + h * (self.density[k] + 0.5 * slope * h)).clamp(0.0, 1.0)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let g = &self.grid;
        let q = q.clamp(0.0, 1.0);
        let k = self.cumulative.partition_point(|&c| c < q).clamp(1, g.len() - 1) - 1;
        let (mut lo, mut hi) = (g[k], g[k + 1]);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn mean(&self) -> f64 {
        let f: Vec<f64> = self.grid.iter().zip(&self.density).map(|(x, d)| x * d).collect();
        stats::trapezoid(&self.grid, &f)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let f: Vec<f64> = self.grid.iter().zip(&self.density).map(|(x, d)| (x - m).powi(2) * d).collect();
        stats::trapezoid(&self.grid, &f).sqrt()
    }

    pub fn credible_interval(&self, level: f64) -> (f64, f64) {
        (self.quantile((1.0 - level) / 2.0), self.quantile((1.0 + level) / 2.0))
    }

    /// Mass in the outermost `frac` of the grid range on each side.
    pub fn tail_mass(&self, frac: f64) -> (f64, f64) {
        let (a, b) = (self.grid[0], self.grid[self.grid.len() - 1]);
        let w = frac * (b - a);
        (self.cdf(a + w), 1.0 - self.cdf(b - w))
    }
}

/// `density_j ∝ π(θ_j) L(θ_j)`.
pub fn grid_posterior(
    prior: &Prior,
    loglik_fn: impl Fn(&[f64]) -> Result<LogLik>,
    grid: Vec<f64>,
) -> Result<GridPosterior> {
    let logs = grid
        .iter()
        .map(|&t| log_posterior(prior, &loglik_fn, &[t]))
        .collect::<Result<Vec<_>>>()?;
    GridPosterior::from_log_density(grid, &logs)
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveGrid {
    pub center: f64,
    pub half_width: f64,
    pub points: usize,
    /// Allowed mass in the outer 1% of the range on each side.
    pub tail_tol: f64,
    pub max_extensions: usize,
}

impl AdaptiveGrid {
    /// `X̄ ± 6·max(1, s)/√n` with 2001 points.
    pub fn for_mean(xbar: f64, s: f64, n: usize) -> Self {
        Self {
            center: xbar,
            half_width: 6.0 * s.max(1.0) / (n as f64).sqrt(),
            points: 2001,
            tail_tol: 1e-6,
            max_extensions: 8,
        }
    }
}

/// Grid posterior whose range is widened (at constant spacing) until each tail
/// carries less than `tail_tol`. `log_post` is called in increasing θ order
/// within each block of new points.
pub fn adaptive_grid_posterior(
    mut log_post: impl FnMut(f64) -> Result<f64>,
    spec: &AdaptiveGrid,
) -> Result<GridPosterior> {
    if spec.points < 3 || !(spec.half_width > 0.0) {
        return Err(Error::Input("adaptive grid needs ≥ 3 points and a positive width".into()));
    }
    let h = 2.0 * spec.half_width / (spec.points - 1) as f64;
    let mut grid: Vec<f64> =
        (0..spec.points).map(|k| spec.center - spec.half_width + h * k as f64).collect();
    let mut logs = grid.iter().map(|&t| log_post(t)).collect::<Result<Vec<_>>>()?;
    let block = spec.points / 2;
    for _ in 0..=spec.max_extensions {
        let gp = GridPosterior::from_log_density(grid.clone(), &logs)?;
        let (lo, hi) = gp.tail_mass(0.01);
        if (lo < spec.tail_tol && hi < spec.tail_tol) || spec.max_extensions == 0 {
            return Ok(gp);
        }
        if lo >= spec.tail_tol {
            let start = grid[0];
            let new: Vec<f64> = (1..=block).rev().map(|k| start - h * k as f64).collect();
            let new_logs = new.iter().map(|&t| log_post(t)).collect::<Result<Vec<_>>>()?;
            grid.splice(0..0, new);
            logs.splice(0..0, new_logs);
        }
        if hi >= spec.tail_tol {
            let end = grid[grid.len() - 1];
            for k in 1..=block {
                let t = end + h * k as f64;
                grid.push(t);
                logs.push(log_post(t)?);
            }
        }
    }
    GridPosterior::from_log_density(grid, &logs)
}

/// `H = ∫_{−∞}^{θ} π(t | X) dt`.
pub fn monahan_boos_h(gp: &GridPosterior, theta_true: f64) -> f64 {
    gp.cdf(theta_true)
}
