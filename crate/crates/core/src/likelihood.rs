//! Tilted weights and log-likelihood values for the six methods.
//!
//! Log-likelihoods are assembled directly from `λ` and the log normalizer:
//! `log p_i = a_i + λᵀg_i − log c_n`, so weights never underflow before the
//! logarithm is taken. Hull violation is reported as `−∞`, not as an error.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{
    aetel_augment, default_aetel_scale, Dataset, MomentMatrix, Penalty, PseudoData, Regularization,
};
use crate::solver::{
    solve_el, solve_etel, solve_penalized, solve_wetel, wetel_log_weights, DualSolution, DualStatus,
    SolverSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    El,
    Etel,
    Aetel,
    Wetel,
    RetelF,
    RetelR,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::El, Method::Etel, Method::Aetel, Method::Wetel, Method::RetelF, Method::RetelR];

    pub fn name(self) -> &'static str {
        match self {
            Method::El => "EL",
            Method::Etel => "ETEL",
            Method::Aetel => "AETEL",
            Method::Wetel => "WETEL",
            Method::RetelF => "RETEL_f",
            Method::RetelR => "RETEL_r",
        }
    }

    pub fn is_regularized(self) -> bool {
        matches!(self, Method::RetelF | Method::RetelR)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Input(format!("unknown method `{s}`")))
    }
}

/// Probabilities on the sample points and, for RETEL, the continuous component.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedWeights {
    pub p: Vec<f64>,
    pub p_c: Option<f64>,
}

impl TiltedWeights {
    pub fn total(&self) -> f64 {
        self.p.iter().sum::<f64>() + self.p_c.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLik {
    pub log_l: f64,
    pub log_r: f64,
    pub method: Method,
    pub solution: DualSolution,
}

impl LogLik {
    fn diverged(method: Method, solution: DualSolution) -> Self {
        Self { log_l: f64::NEG_INFINITY, log_r: f64::NEG_INFINITY, method, solution }
    }

    pub fn is_finite(&self) -> bool {
        self.log_l.is_finite()
    }
}

fn require_converged(sol: &DualSolution) -> Result<()> {
    if sol.status != DualStatus::Converged {
        return Err(Error::Contract(format!("weights need a converged solution, got {:?}", sol.status)));
    }
    Ok(())
}

fn log_tilts(m: &MomentMatrix, sol: &DualSolution, log_w: Option<&[f64]>) -> Vec<f64> {
    (0..m.n())
        .map(|i| dot(&sol.lambda, m.row(i)) + log_w.map_or(0.0, |w| w[i]) - sol.log_normalizer)
        .collect()
}

fn log_penalty_mass(pen: &Penalty, sol: &DualSolution) -> f64 {
    let l = &sol.lambda;
    let sl = pen.sigma().mul_vec(l);
    pen.log_tau() + dot(l, pen.mu()) + 0.5 * dot(l, &sl) - sol.log_normalizer
}

/// ETEL weights (`penalty = None`) or RETEL weights with the mass `p_c`.
pub fn weights_from_dual(
    m: &MomentMatrix,
    sol: &DualSolution,
    penalty: Option<&Penalty>,
) -> Result<TiltedWeights> {
    require_converged(sol)?;
    let p = log_tilts(m, sol, None).into_iter().map(f64::exp).collect();
    Ok(TiltedWeights { p, p_c: penalty.map(|pen| log_penalty_mass(pen, sol).exp()) })
}

/// Weights over data rows followed by pseudo rows.
pub fn wetel_weights(m: &MomentMatrix, pseudo: &PseudoData, sol: &DualSolution) -> Result<TiltedWeights> {
    require_converged(sol)?;
    let aug = m.with_rows(pseudo.as_slice())?;
    let w = wetel_log_weights(m.n(), pseudo.m());
    Ok(TiltedWeights { p: log_tilts(&aug, sol, Some(&w)).into_iter().map(f64::exp).collect(), p_c: None })
}

/// `p_i = 1/(n(1 + λᵀg_i))`.
pub fn el_weights(m: &MomentMatrix, sol: &DualSolution) -> Result<TiltedWeights> {
    require_converged(sol)?;
    let n = m.n() as f64;
    let p = (0..m.n()).map(|i| 1.0 / (n * (1.0 + dot(&sol.lambda, m.row(i))))).collect();
    Ok(TiltedWeights { p, p_c: None })
}

pub fn log_etel(m: &MomentMatrix, s: &SolverSettings) -> Result<LogLik> {
    let sol = solve_etel(m, s)?;
    if !sol.is_converged() {
        return Ok(LogLik::diverged(Method::Etel, sol));
    }
    let n = m.n() as f64;
    let log_l: f64 = log_tilts(m, &sol, None).iter().sum();
    Ok(LogLik { log_l, log_r: log_l + n * n.ln(), method: Method::Etel, solution: sol })
}

/// Both RETEL variants from a single dual solve: `(RETEL_f, RETEL_r)`.
pub fn log_retel_pair(m: &MomentMatrix, penalty: &Penalty, s: &SolverSettings) -> Result<(LogLik, LogLik)> {
    let sol = solve_penalized(m, penalty, s)?;
    let n = m.n() as f64;
    let l = &sol.lambda;
    let log_base = (n + penalty.tau()).ln();
    // At λ = 0 the normalizer is exactly n + τ.
    let log_c = if l.iter().all(|&v| v == 0.0) { log_base } else { sol.log_normalizer };
    let delta = log_c - log_base;
    let tilt: f64 = (0..m.n()).map(|i| dot(l, m.row(i))).sum();
    let pen = dot(l, penalty.mu()) + 0.5 * dot(l, &penalty.sigma().mul_vec(l));
    let log_l_r = tilt - n * log_c;
    let log_r_r = tilt - n * delta;
    let full = LogLik {
        log_l: penalty.log_tau() + pen - log_c + log_l_r,
        log_r: log_r_r + pen - delta,
        method: Method::RetelF,
        solution: sol.clone(),
    };
    let reduced = LogLik { log_l: log_l_r, log_r: log_r_r, method: Method::RetelR, solution: sol };
    Ok((full, reduced))
}

/// RETEL log-likelihood; `method` must be `RetelF` or `RetelR`.
pub fn log_retel(
    m: &MomentMatrix,
    reg: &Regularization,
    data: &Dataset,
    method: Method,
    s: &SolverSettings,
) -> Result<LogLik> {
    let (full, reduced) = log_retel_pair(m, &reg.resolve(data, m)?, s)?;
    match method {
        Method::RetelF => Ok(full),
        Method::RetelR => Ok(reduced),
        other => Err(Error::Input(format!("{other} is not a RETEL variant"))),
    }
}

/// ETEL on the `n + 1` points after appending the adjustment row.
pub fn log_aetel(m: &MomentMatrix, a_n: f64, s: &SolverSettings) -> Result<LogLik> {
    let aug = aetel_augment(m, a_n)?;
    let mut ll = log_etel(&aug, s)?;
    ll.method = Method::Aetel;
    Ok(ll)
}

/// `N Σ w_i log p_i` and `N Σ w_i log(p_i/w_i)` with `w` of the fractional scheme.
pub fn log_wetel(m: &MomentMatrix, pseudo: &PseudoData, s: &SolverSettings) -> Result<LogLik> {
    let sol = solve_wetel(m, pseudo, s)?;
    if !sol.is_converged() {
        return Ok(LogLik::diverged(Method::Wetel, sol));
    }
    let n = m.n();
    let k = pseudo.m();
    let big_n = (n + k) as f64;
    let aug = m.with_rows(pseudo.as_slice())?;
    let lw = wetel_log_weights(n, k);
    let log_p = log_tilts(&aug, &sol, Some(&lw));
    let base = |i: usize| if i < n { 1.0 / (n as f64 + 1.0) } else { 1.0 / (k as f64 * (n as f64 + 1.0)) };
    let mut log_l = 0.0;
    let mut log_r = 0.0;
    for (i, lp) in log_p.iter().enumerate() {
        let w = base(i);
        log_l += w * lp;
        log_r += w * (lp - w.ln());
    }
    Ok(LogLik { log_l: big_n * log_l, log_r: big_n * log_r, method: Method::Wetel, solution: sol })
}

pub fn log_el(m: &MomentMatrix, s: &SolverSettings) -> Result<LogLik> {
    let sol = solve_el(m, s)?;
    if !sol.is_converged() {
        return Ok(LogLik::diverged(Method::El, sol));
    }
    let n = m.n() as f64;
    let log_l: f64 =
        (0..m.n()).map(|i| -(n * (1.0 + dot(&sol.lambda, m.row(i)))).ln()).sum();
    Ok(LogLik { log_l, log_r: log_l + n * n.ln(), method: Method::El, solution: sol })
}

/// A fully specified pseudo-likelihood, ready to evaluate at any moment matrix.
#[derive(Debug, Clone)]
pub enum LikelihoodSpec {
    El,
    Etel,
    /// `a_n = None` selects `max(1, log(n)/2)`.
    Aetel { a_n: Option<f64> },
    Wetel { pseudo: PseudoData },
    RetelF { reg: Regularization },
    RetelR { reg: Regularization },
}

impl LikelihoodSpec {
    pub fn method(&self) -> Method {
        match self {
            Self::El => Method::El,
            Self::Etel => Method::Etel,
            Self::Aetel { .. } => Method::Aetel,
            Self::Wetel { .. } => Method::Wetel,
            Self::RetelF { .. } => Method::RetelF,
            Self::RetelR { .. } => Method::RetelR,
        }
    }

    pub fn evaluate(&self, m: &MomentMatrix, data: &Dataset, s: &SolverSettings) -> Result<LogLik> {
        match self {
            Self::El => log_el(m, s),
            Self::Etel => log_etel(m, s),
            Self::Aetel { a_n } => log_aetel(m, a_n.unwrap_or_else(|| default_aetel_scale(m.n())), s),
            Self::Wetel { pseudo } => log_wetel(m, pseudo, s),
            Self::RetelF { reg } => log_retel(m, reg, data, Method::RetelF, s),
            Self::RetelR { reg } => log_retel(m, reg, data, Method::RetelR, s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::{evaluate_moments, MeanFunction};
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn scalar(g: &[f64]) -> MomentMatrix {
        MomentMatrix::from_scalars(g).unwrap()
    }

    fn s() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn etel_weights_and_values() {
        let m = scalar(&[-1.5, 0.5]);
        let sol = solve_etel(&m, &s()).unwrap();
        let w = weights_from_dual(&m, &sol, None).unwrap();
        assert!((w.p[0] - 0.25).abs() < 1e-10 && (w.p[1] - 0.75).abs() < 1e-10);
        let ll = log_etel(&m, &s()).unwrap();
        assert!((ll.log_l - (0.25f64.ln() + 0.75f64.ln())).abs() < 1e-10);

        let sym = log_etel(&scalar(&[-1.0, 1.0]), &s()).unwrap();
        assert!((sym.log_l + 2.0 * LN2).abs() < 1e-15);
        assert_eq!(sym.log_r, 0.0);

        let bad = log_etel(&scalar(&[-3.0, -1.0]), &s()).unwrap();
        assert_eq!(bad.log_l, f64::NEG_INFINITY);
        assert_eq!(bad.log_r, f64::NEG_INFINITY);
        assert!(matches!(weights_from_dual(&scalar(&[-3.0, -1.0]), &bad.solution, None), Err(Error::Contract(_))));
    }

    #[test]
    fn retel_single_zero_row() {
        let pen = Penalty::new(1.0, vec![0.0], Matrix::identity(1)).unwrap();
        let m = scalar(&[0.0]);
        let sol = solve_penalized(&m, &pen, &s()).unwrap();
        let w = weights_from_dual(&m, &sol, Some(&pen)).unwrap();
        assert_eq!(w.p, vec![0.5]);
        assert_eq!(w.p_c, Some(0.5));
        let (_, r) = log_retel_pair(&m, &pen, &s()).unwrap();
        assert!((r.log_l + LN2).abs() < 1e-15);
        assert!(r.log_r.abs() < 1e-15);
    }

    #[test]
    fn retel_m_estimator_preserved() {
        let xs = [0.4, -1.1, 2.0, 0.3, -0.6];
        let data = Dataset::from_scalars(&xs).unwrap();
        let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
        let m = evaluate_moments(&MeanFunction::scalar(), &data, &[xbar]).unwrap();
        for reg in [Regularization::centered(2.0).unwrap(), Regularization::sample_moments(2.0).unwrap()] {
            for method in [Method::RetelF, Method::RetelR] {
                let ll = log_retel(&m, &reg, &data, method, &s()).unwrap();
                assert!(ll.log_r.abs() < 1e-12, "{method} {}", ll.log_r);
            }
        }
    }

    #[test]
    fn single_observation_variant_order() {
        // One observation at 0, θ = 1, μ = −θ, Σ = 1, τ = 1.
        let data = Dataset::from_scalars(&[0.0]).unwrap();
        let m = evaluate_moments(&MeanFunction::scalar(), &data, &[1.0]).unwrap();
        let reg = Regularization::neg_theta(1.0).unwrap();
        let f = log_retel(&m, &reg, &data, Method::RetelF, &s()).unwrap();
        let r = log_retel(&m, &reg, &data, Method::RetelR, &s()).unwrap();
        assert!((f.solution.lambda[0] - 1.3838457424559523).abs() < 1e-9);
        assert!(r.log_r < f.log_r && f.log_r < 0.0);
        // Independent closed form from the scalar root.
        let l: f64 = 1.3838457424559523;
        let log_c = ((-l).exp() + (-l + 0.5 * l * l).exp()).ln();
        let log_p = -l - log_c;
        let log_pc = -l + 0.5 * l * l - log_c;
        assert!((r.log_r - (log_p + LN2)).abs() < 1e-9);
        assert!((f.log_r - (log_pc + LN2 + log_p + LN2)).abs() < 1e-9);

        let m0 = evaluate_moments(&MeanFunction::scalar(), &data, &[0.0]).unwrap();
        for method in [Method::RetelF, Method::RetelR] {
            assert_eq!(log_retel(&m0, &reg, &data, method, &s()).unwrap().log_r, 0.0);
        }
    }

    #[test]
    fn retel_rejects_other_methods() {
        let data = Dataset::from_scalars(&[0.0, 1.0]).unwrap();
        let m = evaluate_moments(&MeanFunction::scalar(), &data, &[0.5]).unwrap();
        let reg = Regularization::centered(1.0).unwrap();
        assert!(log_retel(&m, &reg, &data, Method::Etel, &s()).is_err());
    }

    #[test]
    fn aetel_examples() {
        let xs = [0.5, -0.5, 1.5, -1.5];
        let data = Dataset::from_scalars(&xs).unwrap();
        let m = evaluate_moments(&MeanFunction::scalar(), &data, &[0.0]).unwrap();
        let ll = log_aetel(&m, 1.0, &s()).unwrap();
        assert!((ll.log_l + 5.0 * 5f64.ln()).abs() < 1e-12);
        assert!(ll.log_r.abs() < 1e-12);

        let bad = log_aetel(&scalar(&[-3.0, -1.0]), 0.3466, &s()).unwrap();
        assert!(bad.log_l.is_finite());
        // Bisection oracle on the three-point stationarity equation.
        let g = [-3.0, -1.0, 0.6932];
        let f = |l: f64| g.iter().map(|&x| x * (l * x).exp()).sum::<f64>();
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 { lo = mid } else { hi = mid }
        }
        assert!((bad.solution.lambda[0] - lo).abs() < 1e-9);

        let tiny = log_aetel(&scalar(&[-1.5, 0.5]), 1e-6, &s()).unwrap();
        let limit = log_etel(&scalar(&[-1.5, 0.5, 0.5e-6]), &s()).unwrap();
        assert!((tiny.log_l - limit.log_l).abs() < 1e-9);
        let zero_row = log_etel(&scalar(&[-1.5, 0.5, 0.0]), &s()).unwrap();
        assert!((tiny.log_l - zero_row.log_l).abs() < 1e-5);
    }

    #[test]
    fn wetel_examples() {
        let pseudo = PseudoData::new(vec![-1.0, 1.0], 2, 1).unwrap();
        let ll = log_wetel(&scalar(&[-1.0, 1.0]), &pseudo, &s()).unwrap();
        assert_eq!(ll.solution.lambda, vec![0.0]);
        assert!(ll.log_r.abs() < 1e-12);
        let w = wetel_weights(&scalar(&[-1.0, 1.0]), &pseudo, &ll.solution).unwrap();
        for (i, p) in w.p.iter().enumerate() {
            let base = if i < 2 { 1.0 / 3.0 } else { 1.0 / 6.0 };
            assert!((p - base).abs() < 1e-15);
        }

        let ll = log_wetel(&scalar(&[-3.0, 1.0]), &PseudoData::normal_quantiles(64).unwrap(), &s()).unwrap();
        assert!(ll.log_r.is_finite() && ll.log_r < 0.0);

        let stuck = log_wetel(&scalar(&[-3.0, -1.0]), &PseudoData::new(vec![-2.0], 1, 1).unwrap(), &s()).unwrap();
        assert_eq!(stuck.log_l, f64::NEG_INFINITY);
    }

    #[test]
    fn el_examples() {
        let ll = log_el(&scalar(&[-1.0, 1.0]), &s()).unwrap();
        assert!(ll.log_r.abs() < 1e-15);
        let ll = log_el(&scalar(&[-1.5, 0.5]), &s()).unwrap();
        assert!((ll.log_l - (0.25f64.ln() + 0.75f64.ln())).abs() < 1e-10);
        let w = el_weights(&scalar(&[-1.5, 0.5]), &ll.solution).unwrap();
        assert!((w.p[0] - 0.25).abs() < 1e-10);
        assert_eq!(log_el(&scalar(&[2.0, 5.0]), &s()).unwrap().log_l, f64::NEG_INFINITY);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("GEL".parse::<Method>().is_err());
    }

    #[test]
    fn retel_maximal_at_sample_mean() {
        let xs = [1.2, -0.3, 0.8, 2.1, -1.0, 0.4];
        let data = Dataset::from_scalars(&xs).unwrap();
        let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
        for reg in [Regularization::centered(1.5).unwrap(), Regularization::sample_moments(1.5).unwrap()] {
            for method in [Method::RetelF, Method::RetelR] {
                let mut best = (f64::NEG_INFINITY, 0.0);
                for k in 0..=400 {
                    let theta = xbar - 4.0 + 0.02 * k as f64;
                    let m = evaluate_moments(&MeanFunction::scalar(), &data, &[theta]).unwrap();
                    let v = log_retel(&m, &reg, &data, method, &s()).unwrap().log_r;
                    if v > best.0 {
                        best = (v, theta);
                    }
                }
                assert!((best.1 - xbar).abs() < 0.011, "{method}: argmax {}", best.1);
                assert!(best.0 <= 1e-12);
            }
        }
    }

    fn moment_residual(m: &MomentMatrix, w: &TiltedWeights, tail: Option<(&Penalty, &[f64])>) -> f64 {
        let mut r = vec![0.0; m.p()];
        for i in 0..m.n() {
            for (a, g) in r.iter_mut().zip(m.row(i)) {
                *a += w.p[i] * g;
            }
        }
        if let (Some(pc), Some((pen, l))) = (w.p_c, tail) {
            let sl = pen.sigma().mul_vec(l);
            for (a, (mu, s)) in r.iter_mut().zip(pen.mu().iter().zip(&sl)) {
                *a += pc * (mu + s);
            }
        }
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    proptest! {
        #[test]
        fn weights_normalized_and_balanced(
            g in prop::collection::vec(-4.0f64..4.0, 2..10),
            mu in -3.0f64..3.0,
            tau in 0.1f64..10.0,
        ) {
            let m = scalar(&g);
            let pen = Penalty::new(tau, vec![mu], Matrix::identity(1)).unwrap();
            let sol = solve_penalized(&m, &pen, &s()).unwrap();
            let w = weights_from_dual(&m, &sol, Some(&pen)).unwrap();
            prop_assert!((w.total() - 1.0).abs() < 1e-12);
            prop_assert!(w.p.iter().all(|&p| p >= 0.0) && w.p_c.unwrap() >= 0.0);
            prop_assert!(moment_residual(&m, &w, Some((&pen, &sol.lambda))) < 1e-8);

            let et = solve_etel(&m, &s()).unwrap();
            let interior = g.iter().any(|&v| v < 0.0) && g.iter().any(|&v| v > 0.0);
            prop_assert!(!interior || et.is_converged());
            if interior {
                let w = weights_from_dual(&m, &et, None).unwrap();
                prop_assert!((w.total() - 1.0).abs() < 1e-12);
                prop_assert!(moment_residual(&m, &w, None) < 1e-8);
                prop_assert!(log_etel(&m, &s()).unwrap().log_r <= 1e-12);
                let el = log_el(&m, &s()).unwrap();
                prop_assert!(el.log_r <= 1e-12);
                let w = el_weights(&m, &el.solution).unwrap();
                prop_assert!((w.total() - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn two_point_weights_pinned(a in 0.01f64..5.0, b in 0.01f64..5.0) {
            let (g1, g2) = (-a, b);
            let m = scalar(&[g1, g2]);
            let expect = [g2 / (g2 - g1), -g1 / (g2 - g1)];
            let et = weights_from_dual(&m, &solve_etel(&m, &s()).unwrap(), None).unwrap();
            let el = el_weights(&m, &solve_el(&m, &s()).unwrap()).unwrap();
            for k in 0..2 {
                prop_assert!((et.p[k] - expect[k]).abs() < 1e-10);
                prop_assert!((el.p[k] - expect[k]).abs() < 1e-10);
            }
        }
    }
}
