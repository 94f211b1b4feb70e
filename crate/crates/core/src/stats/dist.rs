//! Special functions and the handful of distributions the studies need.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EPS: f64 = 1e-16;
const MAX_ITER: usize = 2000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a) + h.ln()).exp()
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

pub fn erf(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_p(0.5, x * x)
    } else {
        -gamma_p(0.5, x * x)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal quantile: Acklam's rational approximation polished by
/// two Halley steps against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs p in (0,1), got {p}")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        // Work on the smaller tail to keep the residual accurate.
        let e = if x < 0.0 { normal_cdf(x) - p } else { (1.0 - p) - normal_cdf(-x) };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// The `k/(m+1)` standard-normal quantiles, `k = 1..=m`.
pub fn normal_quantiles(m: usize) -> Vec<f64> {
    (1..=m)
        .map(|k| normal_quantile(k as f64 / (m + 1) as f64).expect("k/(m+1) lies in (0,1)"))
        .collect()
}

pub fn chisq_cdf(x: f64, df: f64) -> f64 {
    gamma_p(0.5 * df, 0.5 * x)
}

pub fn chisq_logpdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let k = 0.5 * df;
    (k - 1.0) * x.ln() - 0.5 * x - k * LN_2 - ln_gamma(k)
}

/// χ² quantile by safeguarded Newton iteration on [`chisq_cdf`].
pub fn chisq_quantile(q: f64, df: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("chi-square quantile needs q in (0,1), got {q}")));
    }
    if !(df > 0.0) {
        return Err(Error::Domain(format!("degrees of freedom must be positive, got {df}")));
    }
    // Wilson–Hilferty starting point.
    let z = normal_quantile(q)?;
    let c = 2.0 / (9.0 * df);
    let mut x = (df * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..200 {
        let f = chisq_cdf(x, df) - q;
        if f.abs() < 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / chisq_logpdf(x, df).exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() <= 1e-15 * x.max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

pub fn logistic_logpdf(x: f64, location: f64, scale: f64) -> f64 {
    let z = (x - location) / scale;
    // log f = -|z| - log s - 2 log(1 + e^{-|z|}), symmetric form avoids overflow.
    let a = z.abs();
    -a - scale.ln() - 2.0 * (-a).exp().ln_1p()
}

pub fn logistic_cdf(x: f64, location: f64, scale: f64) -> f64 {
    1.0 / (1.0 + (-(x - location) / scale).exp())
}

pub fn logistic_quantile(u: f64, location: f64, scale: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("logistic quantile needs u in (0,1), got {u}")));
    }
    Ok(location + scale * (u / (1.0 - u)).ln())
}

pub fn cauchy_logpdf(x: f64, location: f64, scale: f64) -> f64 {
    let z = (x - location) / scale;
    -(PI * scale).ln() - z.mul_add(z, 1.0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn normal_cdf_reference_values() {
        // Reference values from an independent arbitrary-precision evaluation.
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!(close(normal_cdf(1.0), 0.841_344_746_068_542_9, 1e-13));
        assert!(close(normal_cdf(-1.96), 0.024_997_895_148_220_435, 1e-12));
        assert!(close(normal_cdf(-3.0), 0.001_349_898_031_630_094_6, 1e-12));
        assert!(close(normal_cdf(-8.0), 6.220_960_574_271_785e-16, 1e-10));
        assert!(close(erf(0.5), 0.520_499_877_813_046_5, 1e-13));
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.024, 0.3, 0.5, 0.7, 0.975, 0.999_999] {
            let x = normal_quantile(p).unwrap();
            assert!(close(normal_cdf(x), p, 1e-12), "p={p}");
        }
        assert!(close(normal_quantile(0.975).unwrap(), 1.959_963_984_540_054, 1e-13));
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn quartiles_match_root_finding() {
        // Oracle: bisection on normal_cdf.
        let bisect = |p: f64| {
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal_cdf(mid) < p {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            0.5 * (lo + hi)
        };
        let q = normal_quantiles(3);
        assert!((q[0] - bisect(0.25)).abs() < 1e-12);
        assert!(q[1].abs() < 1e-15);
        assert!((q[2] - bisect(0.75)).abs() < 1e-12);
        assert!((q[2] - 0.674_489_750_196_081_7).abs() < 1e-12);
    }

    #[test]
    fn chisq_quantile_95_one_df() {
        // Oracle: composite Simpson integration of the chi-square(1) density
        // after the substitution x = u^2 (removes the endpoint singularity).
        let target: f64 = 3.841_458_820_694_124;
        let n = 20_000;
        let (a, b) = (0.0, target.sqrt());
        let h = (b - a) / n as f64;
        let f = |u: f64| 2.0 * (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((s * h / 3.0 - 0.95).abs() < 1e-12);
        assert!((chisq_quantile(0.95, 1.0).unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn chisq_roundtrip_grid() {
        for &df in &[1.0, 2.0, 5.0] {
            for i in 1..100 {
                let q = i as f64 / 100.0;
                let x = chisq_quantile(q, df).unwrap();
                assert!((chisq_cdf(x, df) - q).abs() < 1e-9, "df={df} q={q}");
            }
        }
        // df = 2 has the closed form 1 - exp(-x/2).
        assert!((chisq_cdf(3.0, 2.0) - (1.0 - (-1.5f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logistic_and_cauchy_densities() {
        assert!((logistic_logpdf(0.0, 0.0, 1.0) - 0.25f64.ln()).abs() < 1e-15);
        assert!((logistic_logpdf(0.0, 0.0, 2.0) - (1.0f64 / 8.0).ln()).abs() < 1e-15);
        assert!((logistic_logpdf(800.0, 0.0, 1.0) + 800.0).abs() < 1e-12);
        let u = logistic_cdf(1.3, 0.5, 2.0);
        assert!((logistic_quantile(u, 0.5, 2.0).unwrap() - 1.3).abs() < 1e-12);
        assert!((cauchy_logpdf(1.0, 0.0, 1.0) + (2.0 * PI).ln()).abs() < 1e-15);
    }
}
