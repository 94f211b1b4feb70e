//! Damped Newton solvers for the convex tilting duals.
//!
//! The exponential-family duals (ETEL, WETEL, RETEL) are all minimized in the
//! form `F(λ) = log Σ_k exp(a_k + λᵀg_k) [+ penalty]`, i.e. the log of the
//! dual objective. Taking the log leaves the minimizer unchanged, keeps every
//! exponential behind a single max-shift, and makes the gradient equal to the
//! weighted moment residual `Σ p_k g_k + p_c(μ + Σλ)`, which is what the
//! convergence tolerance is measured on.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Cholesky};
use crate::model::{Dataset, MomentMatrix, Penalty, PseudoData, Regularization};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualStatus {
    Converged,
    Diverged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    pub status: DualStatus,
    pub iterations: usize,
    /// Norm of the weighted moment residual at `lambda`.
    pub grad_norm: f64,
    /// `log d_n` (ETEL, WETEL), `log c_n` (RETEL) or the EL dual objective.
    pub log_normalizer: f64,
    /// Objective value at every accepted iterate when requested.
    pub trace: Vec<f64>,
}

impl DualSolution {
    pub fn is_converged(&self) -> bool {
        self.status == DualStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Defaults to `200·√p` when `None`.
    pub divergence_lambda_norm: Option<f64>,
    pub line_search_shrink: f64,
    pub record_trace: bool,
    /// Starting point; `λ = 0` when `None`.
    pub initial_lambda: Option<Vec<f64>>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 100,
            divergence_lambda_norm: None,
            line_search_shrink: 0.5,
            record_trace: false,
            initial_lambda: None,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Input("solver tolerance and iteration cap must be positive".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::Input("line_search_shrink must lie in (0, 1)".into()));
        }
        if let Some(c) = self.divergence_lambda_norm {
            if !(c > 0.0) {
                return Err(Error::Input("divergence_lambda_norm must be positive".into()));
            }
        }
        Ok(())
    }

    fn lambda_cap(&self, p: usize) -> f64 {
        self.divergence_lambda_norm.unwrap_or(200.0 * (p as f64).sqrt())
    }

    fn start(&self, p: usize) -> Vec<f64> {
        match &self.initial_lambda {
            Some(l) if l.len() == p && l.iter().all(|v| v.is_finite()) => l.clone(),
            _ => vec![0.0; p],
        }
    }
}

/// A smooth convex objective in `λ` with value, gradient and Hessian.
trait Dual {
    fn p(&self) -> usize;
    fn value(&mut self, lambda: &[f64]) -> f64;
    /// Fills `grad` and `hess` (row-major) and returns the value.
    fn derivatives(&mut self, lambda: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64;
}

/// `log(Σ_k exp(a_k + λᵀg_k) + τ exp(λᵀμ + λᵀΣλ/2))`.
struct TiltDual<'a> {
    g: &'a [f64],
    n: usize,
    p: usize,
    log_w: Option<&'a [f64]>,
    penalty: Option<&'a Penalty>,
    expo: Vec<f64>,
}

impl<'a> TiltDual<'a> {
    fn new(m: &'a MomentMatrix, log_w: Option<&'a [f64]>, penalty: Option<&'a Penalty>) -> Self {
        Self { g: m.as_slice(), n: m.n(), p: m.p(), log_w, penalty, expo: vec![0.0; m.n()] }
    }

    #[inline]
    fn row(&self, k: usize) -> &[f64] {
        &self.g[k * self.p..(k + 1) * self.p]
    }

    // Fills the exponent pool; returns (max shift, penalty exponent, Σλ).
    fn exponents(&mut self, lambda: &[f64]) -> (f64, f64, Vec<f64>) {
        let mut shift = f64::NEG_INFINITY;
        for k in 0..self.n {
            let mut e = dot(lambda, self.row(k));
            if let Some(w) = self.log_w {
                e += w[k];
            }
            self.expo[k] = e;
            shift = shift.max(e);
        }
        let (pen, sigma_lambda) = match self.penalty {
            Some(pen) => {
                let sl = pen.sigma().mul_vec(lambda);
                let e = pen.log_tau() + dot(lambda, pen.mu()) + 0.5 * dot(lambda, &sl);
                shift = shift.max(e);
                (e, sl)
            }
            None => (f64::NEG_INFINITY, Vec::new()),
        };
        (shift, pen, sigma_lambda)
    }
}

impl Dual for TiltDual<'_> {
    fn p(&self) -> usize {
        self.p
    }

    fn value(&mut self, lambda: &[f64]) -> f64 {
        let (shift, pen, _) = self.exponents(lambda);
        if !shift.is_finite() {
            return shift;
        }
        let mut s: f64 = self.expo.iter().map(|e| (e - shift).exp()).sum();
        if self.penalty.is_some() {
            s += (pen - shift).exp();
        }
        shift + s.ln()
    }

    fn derivatives(&mut self, lambda: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let p = self.p;
        let (shift, pen, sigma_lambda) = self.exponents(lambda);
        grad.iter_mut().for_each(|v| *v = 0.0);
        hess.iter_mut().for_each(|v| *v = 0.0);
        let mut s = 0.0;
        for k in 0..self.n {
            let w = (self.expo[k] - shift).exp();
            self.expo[k] = w;
            s += w;
        }
        let wc = if self.penalty.is_some() { (pen - shift).exp() } else { 0.0 };
        s += wc;
        for k in 0..self.n {
            let w = self.expo[k] / s;
            if w == 0.0 {
                continue;
            }
            let g = &self.g[k * p..(k + 1) * p];
            for a in 0..p {
                let wa = w * g[a];
                grad[a] += wa;
                for b in 0..=a {
                    hess[a * p + b] += wa * g[b];
                }
            }
        }
        if let Some(pen) = self.penalty {
            let pc = wc / s;
            let q: Vec<f64> = pen.mu().iter().zip(&sigma_lambda).map(|(m, sl)| m + sl).collect();
            for a in 0..p {
                grad[a] += pc * q[a];
                for b in 0..=a {
                    hess[a * p + b] += pc * (q[a] * q[b] + pen.sigma().get(a, b));
                }
            }
        }
        for a in 0..p {
            for b in 0..=a {
                let h = hess[a * p + b] - grad[a] * grad[b];
                hess[a * p + b] = h;
                hess[b * p + a] = h;
            }
        }
        shift + s.ln()
    }
}

/// Owen's dual `−(1/n) Σ log⋆(1 + λᵀg_i)` with the quadratic extension of
/// `log` below `1/n`.
struct ElDual<'a> {
    g: &'a [f64],
    n: usize,
    p: usize,
}

impl ElDual<'_> {
    // log⋆ and its first two derivatives.
    #[inline]
    fn log_star(&self, z: f64) -> (f64, f64, f64) {
        let nf = self.n as f64;
        let eps = 1.0 / nf;
        if z >= eps {
            (z.ln(), 1.0 / z, -1.0 / (z * z))
        } else {
            let t = nf * z;
            (-nf.ln() - 1.5 + 2.0 * t - 0.5 * t * t, 2.0 * nf - nf * t, -nf * nf)
        }
    }
}

impl Dual for ElDual<'_> {
    fn p(&self) -> usize {
        self.p
    }

    fn value(&mut self, lambda: &[f64]) -> f64 {
        let p = self.p;
        let s: f64 = (0..self.n)
            .map(|i| self.log_star(1.0 + dot(lambda, &self.g[i * p..(i + 1) * p])).0)
            .sum();
        -s / self.n as f64
    }

    fn derivatives(&mut self, lambda: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let p = self.p;
        let nf = self.n as f64;
        grad.iter_mut().for_each(|v| *v = 0.0);
        hess.iter_mut().for_each(|v| *v = 0.0);
        let mut f = 0.0;
        for i in 0..self.n {
            let g = &self.g[i * p..(i + 1) * p];
            let (l0, l1, l2) = self.log_star(1.0 + dot(lambda, g));
            f -= l0;
            for a in 0..p {
                grad[a] -= l1 * g[a] / nf;
                for b in 0..=a {
                    hess[a * p + b] -= l2 * g[a] * g[b] / nf;
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[b * p + a] = hess[a * p + b];
            }
        }
        f / nf
    }
}

fn newton(dual: &mut dyn Dual, s: &SolverSettings, penalized: bool) -> DualSolution {
    let p = dual.p();
    let cap = s.lambda_cap(p);
    let mut lambda = s.start(p);
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut f = dual.derivatives(&lambda, &mut grad, &mut hess);
    let mut trace = Vec::new();
    if s.record_trace {
        trace.push(f);
    }
    let finish = |lambda: Vec<f64>, status, iterations, grad: &[f64], f, trace| DualSolution {
        lambda,
        status,
        iterations,
        grad_norm: norm(grad),
        log_normalizer: f,
        trace,
    };

    for iter in 0..s.max_iter {
        let gn = norm(&grad);
        if gn <= s.grad_tol {
            polish(dual, &mut lambda, &mut grad, &mut f, &hess, s.record_trace.then_some(&mut trace));
            return finish(lambda, DualStatus::Converged, iter, &grad, f, trace);
        }
        let chol = match Cholesky::factor(&hess, p) {
            Some(c) => c,
            None if penalized => ridge_factor(&hess, p),
            None => return finish(lambda, DualStatus::Diverged, iter, &grad, f, trace),
        };
        let dir: Vec<f64> = chol.solve(&grad).into_iter().map(|v| -v).collect();
        let slope = dot(&grad, &dir);

        let noise = 8.0 * f64::EPSILON * f.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        let mut trial = vec![0.0; p];
        // Below the roundoff floor of F the Armijo test is meaningless.
        let backtracks = if -slope <= noise { 0 } else { MAX_BACKTRACKS };
        for _ in 0..backtracks {
            for ((x, l), d) in trial.iter_mut().zip(&lambda).zip(&dir) {
                *x = l + t * d;
            }
            let ft = dual.value(&trial);
            if ft <= f + ARMIJO_C1 * t * slope && (ft < f || t == 1.0) {
                accepted = Some(trial.clone());
                break;
            }
            t *= s.line_search_shrink;
        }
        let mut new_grad = vec![0.0; p];
        let mut new_hess = vec![0.0; p * p];
        let (new_lambda, new_f) = match accepted {
            Some(l) => {
                let nf = dual.derivatives(&l, &mut new_grad, &mut new_hess);
                (l, nf)
            }
            None => {
                // Near the optimum the Armijo test drowns in roundoff; take the
                // full step if it does not increase F beyond that and helps the gradient.
                let full: Vec<f64> = lambda.iter().zip(&dir).map(|(l, d)| l + d).collect();
                let nf = dual.derivatives(&full, &mut new_grad, &mut new_hess);
                if nf <= f + noise && norm(&new_grad) < gn {
                    (full, nf)
                } else {
                    return finish(lambda, DualStatus::MaxIterations, iter, &grad, f, trace);
                }
            }
        };
        lambda = new_lambda;
        f = new_f;
        grad = new_grad;
        hess = new_hess;
        if s.record_trace {
            trace.push(f);
        }
        if !penalized && (norm(&lambda) > cap || !f.is_finite()) && norm(&grad) > s.grad_tol {
            return finish(lambda, DualStatus::Diverged, iter + 1, &grad, f, trace);
        }
    }
    let status = if norm(&grad) <= s.grad_tol { DualStatus::Converged } else { DualStatus::MaxIterations };
    finish(lambda, status, s.max_iter, &grad, f, trace)
}

// One extra Newton step once the tolerance is met, kept only if it lowers the
// residual without raising F beyond roundoff.
fn polish(
    dual: &mut dyn Dual,
    lambda: &mut Vec<f64>,
    grad: &mut Vec<f64>,
    f: &mut f64,
    hess: &[f64],
    trace: Option<&mut Vec<f64>>,
) {
    let p = lambda.len();
    let gn = norm(grad);
    if gn == 0.0 {
        return;
    }
    let Some(chol) = Cholesky::factor(hess, p) else { return };
    let step = chol.solve(grad);
    let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, d)| l - d).collect();
    let mut g2 = vec![0.0; p];
    let mut h2 = vec![0.0; p * p];
    let f2 = dual.derivatives(&trial, &mut g2, &mut h2);
    if norm(&g2) < gn && f2 <= *f + 8.0 * f64::EPSILON * f.abs().max(1.0) {
        *lambda = trial;
        *grad = g2;
        *f = f2;
        if let Some(t) = trace {
            t.push(f2);
        }
    }
}

fn ridge_factor(hess: &[f64], p: usize) -> Cholesky {
    let scale = (0..p).map(|a| hess[a * p + a].abs()).fold(0.0, f64::max).max(1.0);
    let mut ridge = 1e-12 * scale;
    loop {
        let mut h = hess.to_vec();
        for a in 0..p {
            h[a * p + a] += ridge;
        }
        if let Some(c) = Cholesky::factor(&h, p) {
            return c;
        }
        ridge *= 10.0;
    }
}

fn check_rows(m: &MomentMatrix) -> Result<()> {
    if m.n() == 0 {
        return Err(Error::Input("the moment matrix has no rows".into()));
    }
    Ok(())
}

/// `λ_ET = argmin Σ exp(λᵀg_i)`.
pub fn solve_etel(m: &MomentMatrix, s: &SolverSettings) -> Result<DualSolution> {
    s.validate()?;
    check_rows(m)?;
    Ok(newton(&mut TiltDual::new(m, None, None), s, false))
}

/// Minimizes `Σ exp(λᵀg_i) + τ exp(λᵀμ + λᵀΣλ/2)` for an already resolved penalty.
pub fn solve_penalized(m: &MomentMatrix, penalty: &Penalty, s: &SolverSettings) -> Result<DualSolution> {
    s.validate()?;
    if penalty.p() != m.p() {
        return Err(Error::Input(format!(
            "penalty dimension {} does not match moment dimension {}",
            penalty.p(),
            m.p()
        )));
    }
    let sol = newton(&mut TiltDual::new(m, None, Some(penalty)), s, true);
    match sol.status {
        DualStatus::Converged => Ok(sol),
        _ => Err(Error::NotConverged { best: Box::new(sol) }),
    }
}

/// `λ_RET` for the penalty described by `reg` at the parameter carried by `m`.
pub fn solve_retel(
    m: &MomentMatrix,
    reg: &Regularization,
    data: &Dataset,
    s: &SolverSettings,
) -> Result<DualSolution> {
    solve_penalized(m, &reg.resolve(data, m)?, s)
}

/// Log base weights of the tilt dual for data followed by pseudo rows:
/// `0` for data and `−log m` for each of the `m` pseudo rows.
pub(crate) fn wetel_log_weights(n: usize, m: usize) -> Vec<f64> {
    let mut w = vec![0.0; n + m];
    w[n..].iter_mut().for_each(|v| *v = -(m as f64).ln());
    w
}

/// `λ_WET = argmin Σ_i exp(λᵀg_i) + m⁻¹ Σ_j exp(λᵀg̃_j)`.
pub fn solve_wetel(m: &MomentMatrix, pseudo: &PseudoData, s: &SolverSettings) -> Result<DualSolution> {
    s.validate()?;
    check_rows(m)?;
    if pseudo.p() != m.p() {
        return Err(Error::Input("pseudo-data width does not match the moment dimension".into()));
    }
    let aug = m.with_rows(pseudo.as_slice())?;
    let w = wetel_log_weights(m.n(), pseudo.m());
    Ok(newton(&mut TiltDual::new(&aug, Some(&w), None), s, false))
}

/// Owen's empirical likelihood multiplier; weights are `1/(n(1 + λᵀg_i))`.
pub fn solve_el(m: &MomentMatrix, s: &SolverSettings) -> Result<DualSolution> {
    s.validate()?;
    check_rows(m)?;
    let mut dual = ElDual { g: m.as_slice(), n: m.n(), p: m.p() };
    let mut sol = newton(&mut dual, s, false);
    if sol.is_converged() {
        let floor = 1.0 / m.n() as f64;
        let inside = (0..m.n()).all(|i| 1.0 + dot(&sol.lambda, m.row(i)) > floor);
        if !inside {
            sol.status = DualStatus::Diverged;
        }
    }
    Ok(sol)
}
