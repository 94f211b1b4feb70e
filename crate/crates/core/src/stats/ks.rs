//! One-sample Kolmogorov–Smirnov test with the asymptotic Kolmogorov
//! distribution.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `P(K > t)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        // P(K <= t) = sqrt(2π)/t Σ exp(-(2k-1)²π²/(8t²)); converges fast for small t.
        let mut s = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * PI * PI / (8.0 * t * t)).exp();
            s += term;
            if term < 1e-12 * s.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (1.0 - (2.0 * PI).sqrt() / t * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * t * t).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-12 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// KS test of `samples` against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let u: Vec<f64> = samples.iter().map(|&x| cdf(x)).collect();
    ks_uniform(&u)
}

/// KS test of `samples ⊂ [0, 1]` against U(0, 1).
pub fn ks_uniform(samples: &[f64]) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::Input("KS test needs at least one sample".into()));
    }
    if let Some(bad) = samples.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::Domain(format!("KS uniformity sample {bad} outside [0,1]")));
    }
    let mut u = samples.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let statistic = u
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / n - x).max(x - i / n)
        })
        .fold(0.0, f64::max);
    Ok(KsResult { statistic, p_value: kolmogorov_sf(n.sqrt() * statistic), n: u.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn midpoint_sample_statistic() {
        let u: Vec<f64> = (1..=10).map(|i| (i as f64 - 0.5) / 10.0).collect();
        let r = ks_uniform(&u).unwrap();
        assert!((r.statistic - 0.05).abs() < 1e-15);
    }

    #[test]
    fn constant_sample_statistic() {
        let r = ks_uniform(&[0.5; 7]).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(ks_uniform(&[0.2, 1.5]), Err(Error::Domain(_))));
        assert!(ks_uniform(&[]).is_err());
    }

    #[test]
    fn series_branches_agree() {
        // Both expansions are exact; they must agree where they meet.
        let t = 1.18;
        let mut small = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            small += (-j * j * PI * PI / (8.0 * t * t)).exp();
        }
        let cdf_small = (2.0 * PI).sqrt() / t * small;
        assert!((1.0 - cdf_small - kolmogorov_sf(t)).abs() < 1e-12);
        // Known quantile: P(K > 1.3581) ≈ 0.05.
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn uniform_draws_rarely_rejected() {
        let mut rejected = 0;
        for seed in 0..200 {
            let mut rng = stream(seed, &[99]);
            let u: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            if ks_uniform(&u).unwrap().p_value <= 0.001 {
                rejected += 1;
            }
        }
        assert!(rejected <= 2, "rejected {rejected} of 200");
    }

    proptest::proptest! {
        #[test]
        fn statistic_ignores_order(mut v in proptest::collection::vec(0.0f64..=1.0, 1..50)) {
            let a = ks_uniform(&v).unwrap();
            v.reverse();
            let b = ks_uniform(&v).unwrap();
            proptest::prop_assert_eq!(a.statistic, b.statistic);
        }
    }
}
