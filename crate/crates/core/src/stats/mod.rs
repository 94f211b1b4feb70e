//! Statistical utilities: distribution functions, the Kolmogorov–Smirnov
//! uniformity test, Gaussian kernel density estimation, adaptive quadrature,
//! Kullback–Leibler divergence and the sandwich covariance.

pub mod dist;
pub mod kde;
pub mod ks;
pub mod quad;
pub mod sandwich;

pub use dist::{
    cauchy_logpdf, chisq_cdf, chisq_quantile, logistic_cdf, logistic_logpdf, logistic_quantile,
    normal_cdf, normal_logpdf, normal_quantile, normal_quantiles,
};
pub use kde::{kde, kl_between, silverman_bandwidth, trapezoid, DensityEstimate};
pub use ks::{kolmogorov_sf, ks_test, ks_uniform, KsResult};
pub use quad::adaptive_quad;
pub use sandwich::sandwich_omega;

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Empirical quantile of sorted data with plotting position `(k-1)/(n-1)`
/// and linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median of an unsorted sample.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}
