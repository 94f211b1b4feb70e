//! Gaussian kernel density estimates on a grid and the KL divergence of such
//! an estimate from a prior density.

use super::dist::normal_pdf;
use super::quad::adaptive_quad;
use super::{quantile_sorted, variance};
use crate::error::{Error, Result};

/// Density tabulated on a grid and interpolated linearly between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    grid: Vec<f64>,
    values: Vec<f64>,
    bandwidth: f64,
}

impl DensityEstimate {
    /// Wraps tabulated values, renormalizing them to unit trapezoid mass.
    pub fn from_grid(grid: Vec<f64>, values: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::Input("density grid needs ≥ 2 points matching the values".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input("density grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Input("density values must be finite and nonnegative".into()));
        }
        let mass = trapezoid(&grid, &values);
        if !(mass > 0.0) {
            return Err(Error::Degenerate("density has zero mass on the grid".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values, bandwidth })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t < g[0] || t > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&x| x <= t).clamp(1, g.len() - 1);
        let w = (t - g[k - 1]) / (g[k] - g[k - 1]);
        (1.0 - w) * self.values[k - 1] + w * self.values[k]
    }

    pub fn support(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }
}

/// Trapezoid rule on a (not necessarily uniform) grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let sd = variance(samples).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("samples have zero variance".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian-kernel density estimate evaluated on `grid`.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<DensityEstimate> {
    if samples.len() < 10 {
        return Err(Error::Input(format!("KDE needs at least 10 samples, got {}", samples.len())));
    }
    let h = silverman_bandwidth(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let reach = 9.0 * h;
    let norm = 1.0 / (samples.len() as f64 * h);
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let lo = sorted.partition_point(|&x| x < t - reach);
            let hi = sorted.partition_point(|&x| x <= t + reach);
            norm * sorted[lo..hi].iter().map(|&x| normal_pdf((t - x) / h)).sum::<f64>()
        })
        .collect();
    DensityEstimate::from_grid(grid.to_vec(), values, h)
}

/// `∫ post (log post − log prior)` over the hull of `grid`.
///
/// Integrates cell by cell so the kinks of the interpolated estimate sit on
/// panel boundaries.
pub fn kl_between(
    post: &DensityEstimate,
    prior_logpdf: impl Fn(f64) -> f64,
    grid: &[f64],
    tol: f64,
) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::Input("KL grid needs at least two points".into()));
    }
    let integrand = |t: f64| -> std::result::Result<f64, f64> {
        let d = post.eval(t);
        if d <= 0.0 {
            return Ok(0.0);
        }
        let lp = prior_logpdf(t);
        if lp == f64::NEG_INFINITY {
            return if d > 1e-12 { Err(t) } else { Ok(0.0) };
        }
        Ok(d * (d.ln() - lp))
    };
    for &t in grid {
        if let Err(t) = integrand(t) {
            return Err(Error::Support(format!("prior vanishes at {t} where the posterior is positive")));
        }
    }
    let cell_tol = tol / (grid.len() - 1) as f64;
    let mut total = 0.0;
    for w in grid.windows(2) {
        let value = adaptive_quad(|t| integrand(t).unwrap_or(0.0), w[0], w[1], cell_tol);
        total += match value {
            Ok(v) => v,
            Err(Error::Accuracy { partial }) => partial,
            Err(e) => return Err(e),
        };
    }
    if total < 0.0 && total >= -1e-6 {
        total = 0.0;
    }
    Ok(total)
}
