//! Datasets, estimating functions, moment matrices and regularization
//! specifications.
//!
//! Parameters are flat vectors: the components of interest come first and any
//! nuisance components follow.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::solver::{solve_etel, DualStatus, SolverSettings};
use crate::stats::normal_quantiles;

/// `n × d_x` observations stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<f64>, n: usize, dim: usize) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Input("dataset needs n ≥ 1 and d_x ≥ 1".into()));
        }
        if rows.len() != n * dim {
            return Err(Error::Input(format!("expected {} values, got {}", n * dim, rows.len())));
        }
        if let Some(i) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite observation in row {}", i / dim)));
        }
        Ok(Self { rows, n, dim })
    }

    /// One-dimensional observations.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.to_vec(), xs.len(), 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    pub fn column_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.n {
            for (a, x) in m.iter_mut().zip(self.row(i)) {
                *a += x;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }
}

/// A row-wise estimating function `g(x, θ) ∈ ℝ^p`.
pub trait EstimatingFunction: Send + Sync {
    fn name(&self) -> &str;
    /// Moment dimension `p`.
    fn moment_dim(&self) -> usize;
    /// Length of the flattened parameter vector.
    fn param_dim(&self) -> usize;
    /// Expected width `d_x` of an observation.
    fn input_dim(&self) -> usize;
    fn eval(&self, x: &[f64], theta: &[f64], out: &mut [f64]);
}

/// `g(x, θ) = x − θ`.
#[derive(Debug, Clone, Copy)]
pub struct MeanFunction {
    pub dim: usize,
}

impl MeanFunction {
    pub fn scalar() -> Self {
        Self { dim: 1 }
    }
}

impl EstimatingFunction for MeanFunction {
    fn name(&self) -> &str {
        "mean"
    }
    fn moment_dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn eval(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        for ((o, x), t) in out.iter_mut().zip(x).zip(theta) {
            *o = x - t;
        }
    }
}

/// `g(y, (θ, V)) = (y − θ, (y − θ)²/V − 1)`: mean and known sampling variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanVarFunction;

impl EstimatingFunction for MeanVarFunction {
    fn name(&self) -> &str {
        "mean_var"
    }
    fn moment_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    #[inline]
    fn eval(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let e = x[0] - theta[0];
        out[0] = e;
        out[1] = e * e / theta[1] - 1.0;
    }
}

/// The `n × p` matrix of `g_i(θ)` at a fixed parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    values: Vec<f64>,
    n: usize,
    p: usize,
    theta: Vec<f64>,
}

impl MomentMatrix {
    /// `n = 0` is allowed; only the regularized solver accepts it.
    pub fn new(values: Vec<f64>, n: usize, p: usize, theta: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Input("moment dimension must be positive".into()));
        }
        if values.len() != n * p {
            return Err(Error::Input(format!("expected {} moment values, got {}", n * p, values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { row: i / p });
        }
        Ok(Self { values, n, p, theta })
    }

    /// One-dimensional moments.
    pub fn from_scalars(g: &[f64]) -> Result<Self> {
        Self::new(g.to_vec(), g.len(), 1, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `h_n(θ) = n⁻¹ Σ g_i(θ)`.
    pub fn column_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p];
        for i in 0..self.n {
            for (a, g) in m.iter_mut().zip(self.row(i)) {
                *a += g;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.n.max(1) as f64);
        m
    }

    /// Sum of outer products `Σ g_i g_iᵀ`, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let p = self.p;
        let mut s = vec![0.0; p * p];
        for i in 0..self.n {
            let g = self.row(i);
            for a in 0..p {
                for b in 0..p {
                    s[a * p + b] += g[a] * g[b];
                }
            }
        }
        s
    }

    /// `V_n(θ) = n⁻¹ Σ g_i g_iᵀ`.
    pub fn second_moment(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.gram().into_iter().map(|v| v / n).collect()
    }

    /// Copy with extra rows appended.
    pub fn with_rows(&self, extra: &[f64]) -> Result<Self> {
        let mut values = self.values.clone();
        values.extend_from_slice(extra);
        Self::new(values, self.n + extra.len() / self.p, self.p, self.theta.clone())
    }
}

fn check_theta(ef: &dyn EstimatingFunction, data: &Dataset, theta: &[f64]) -> Result<()> {
    if data.dim() != ef.input_dim() {
        return Err(Error::Input(format!(
            "{} expects observations of width {}, dataset has {}",
            ef.name(),
            ef.input_dim(),
            data.dim()
        )));
    }
    if theta.len() != ef.param_dim() {
        return Err(Error::Input(format!(
            "{} expects a parameter of length {}, got {}",
            ef.name(),
            ef.param_dim(),
            theta.len()
        )));
    }
    Ok(())
}

/// Row `i` of the result is `g(X_i, θ)`.
pub fn evaluate_moments(
    ef: &dyn EstimatingFunction,
    data: &Dataset,
    theta: &[f64],
) -> Result<MomentMatrix> {
    check_theta(ef, data, theta)?;
    let p = ef.moment_dim();
    let mut values = vec![0.0; data.n() * p];
    for (i, out) in values.chunks_mut(p).enumerate() {
        ef.eval(data.row(i), theta, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation { row: i });
        }
    }
    Ok(MomentMatrix { values, n: data.n(), p, theta: theta.to_vec() })
}

/// Like [`evaluate_moments`] but with a separate parameter per observation
/// (`params` is `n × dim_θ`), as in area-level hierarchical models.
pub fn evaluate_moments_per_row(
    ef: &dyn EstimatingFunction,
    data: &Dataset,
    params: &[f64],
) -> Result<MomentMatrix> {
    let k = ef.param_dim();
    if params.len() != data.n() * k {
        return Err(Error::Input(format!(
            "expected {} per-row parameters, got {}",
            data.n() * k,
            params.len()
        )));
    }
    check_theta(ef, data, &params[..k])?;
    let p = ef.moment_dim();
    let mut values = vec![0.0; data.n() * p];
    for (i, out) in values.chunks_mut(p).enumerate() {
        ef.eval(data.row(i), &params[i * k..(i + 1) * k], out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation { row: i });
        }
    }
    Ok(MomentMatrix { values, n: data.n(), p, theta: params.to_vec() })
}

/// Outcome of [`hull_contains_zero`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HullCheck {
    pub inside: bool,
    /// `false` when the verdict comes from a capped dual solve (`p ≥ 3`).
    pub exact: bool,
}

/// Whether `0` lies in the interior of the convex hull of the moment rows.
pub fn hull_contains_zero(m: &MomentMatrix) -> HullCheck {
    match m.p() {
        1 => {
            let (lo, hi) = m
                .as_slice()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| (lo.min(g), hi.max(g)));
            HullCheck { inside: lo < 0.0 && 0.0 < hi, exact: true }
        }
        2 => HullCheck { inside: planar_hull_contains_zero(m), exact: true },
        _ => {
            let inside = m.n() > m.p()
                && solve_etel(m, &SolverSettings::default())
                    .map(|s| s.status == DualStatus::Converged)
                    .unwrap_or(false);
            HullCheck { inside, exact: false }
        }
    }
}

// Angular sweep: 0 is interior iff consecutive directions never turn by π or more.
fn planar_hull_contains_zero(m: &MomentMatrix) -> bool {
    let mut pts: Vec<(f64, f64, f64)> = (0..m.n())
        .map(|i| (m.row(i)[0], m.row(i)[1]))
        .filter(|&(x, y)| x != 0.0 || y != 0.0)
        .map(|(x, y)| ((y + 0.0).atan2(x + 0.0), x, y))
        .collect();
    if pts.len() < 3 {
        return false;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = pts.len();
    (0..k).all(|i| {
        let (_, ax, ay) = pts[i];
        let (_, bx, by) = pts[(i + 1) % k];
        let cross = ax * by - ay * bx;
        let dot = ax * bx + ay * by;
        cross > 0.0 || (cross == 0.0 && dot > 0.0 && i + 1 < k)
    })
}

/// AETEL scale `max(1, log(n)/2)`.
pub fn default_aetel_scale(n: usize) -> f64 {
    (0.5 * (n.max(1) as f64).ln()).max(1.0)
}

/// Appends the pseudo-observation `−(a_n/n) Σ g_i(θ)`.
pub fn aetel_augment(m: &MomentMatrix, a_n: f64) -> Result<MomentMatrix> {
    if !(a_n > 0.0) {
        return Err(Error::Input(format!("a_n must be positive, got {a_n}")));
    }
    if m.n() == 0 {
        return Err(Error::Input("cannot augment an empty moment matrix".into()));
    }
    let extra: Vec<f64> = m.column_mean().into_iter().map(|h| -a_n * h).collect();
    m.with_rows(&extra)
}

/// `m` pseudo moment vectors appended to the data with fractional weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoData {
    rows: Vec<f64>,
    m: usize,
    p: usize,
}

impl PseudoData {
    pub fn new(rows: Vec<f64>, m: usize, p: usize) -> Result<Self> {
        if m == 0 || p == 0 || rows.len() != m * p {
            return Err(Error::Input("pseudo-data needs m ≥ 1 rows of width p".into()));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("pseudo-data must be finite".into()));
        }
        Ok(Self { rows, m, p })
    }

    /// Scalar pseudo-data at the `k/(m+1)` standard-normal quantiles.
    pub fn normal_quantiles(m: usize) -> Result<Self> {
        Self::new(normal_quantiles(m), m, 1)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.p..(j + 1) * self.p]
    }
}

/// User-supplied `(Dataset, M) ↦ μ` or `↦ Σ` (row-major).
pub type PenaltyFn = Arc<dyn Fn(&Dataset, &MomentMatrix) -> Vec<f64> + Send + Sync>;

/// How `μ_{n,θ}` and `Σ_{n,θ}` are formed.
#[derive(Clone)]
pub enum PenaltyShape {
    /// `μ = 0`, `Σ = I`.
    Centered,
    /// `μ = X̄ − θ`, `Σ = I` (mean parameter only).
    InvariantMean,
    /// `μ = h_n(θ)`, `Σ = (n − 1)⁻¹ Σ g_i g_iᵀ`.
    SampleMoments,
    /// `μ = −θ`, `Σ = I`.
    NegTheta,
    Custom { mu: PenaltyFn, sigma: PenaltyFn },
}

impl fmt::Debug for PenaltyShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Centered => f.write_str("Centered"),
            Self::InvariantMean => f.write_str("InvariantMean"),
            Self::SampleMoments => f.write_str("SampleMoments"),
            Self::NegTheta => f.write_str("NegTheta"),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// The penalty `τ exp(λᵀμ + λᵀΣλ/2)` added to the tilting dual.
#[derive(Debug, Clone)]
pub struct Regularization {
    tau: f64,
    shape: PenaltyShape,
}

impl Regularization {
    pub fn new(tau: f64, shape: PenaltyShape) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Input(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { tau, shape })
    }

    pub fn centered(tau: f64) -> Result<Self> {
        Self::new(tau, PenaltyShape::Centered)
    }

    pub fn invariant_mean(tau: f64) -> Result<Self> {
        Self::new(tau, PenaltyShape::InvariantMean)
    }

    pub fn sample_moments(tau: f64) -> Result<Self> {
        Self::new(tau, PenaltyShape::SampleMoments)
    }

    pub fn neg_theta(tau: f64) -> Result<Self> {
        Self::new(tau, PenaltyShape::NegTheta)
    }

    /// Fixed `μ` and `Σ` regardless of data and parameter.
    pub fn constant(tau: f64, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        Self::new(
            tau,
            PenaltyShape::Custom {
                mu: Arc::new(move |_, _| mu.clone()),
                sigma: Arc::new(move |_, _| sigma.clone()),
            },
        )
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn shape(&self) -> &PenaltyShape {
        &self.shape
    }

    /// Evaluates `μ_{n,θ}` and `Σ_{n,θ}` and validates `Σ`.
    pub fn resolve(&self, data: &Dataset, m: &MomentMatrix) -> Result<Penalty> {
        let p = m.p();
        let (mu, sigma) = match &self.shape {
            PenaltyShape::Centered => (vec![0.0; p], Matrix::identity(p)),
            PenaltyShape::InvariantMean => {
                if data.dim() != p || m.theta().len() != p {
                    return Err(Error::Input(
                        "invariant-mean preset needs d_x = dim θ = p (mean parameter)".into(),
                    ));
                }
                let mu = data.column_mean().iter().zip(m.theta()).map(|(x, t)| x - t).collect();
                (mu, Matrix::identity(p))
            }
            PenaltyShape::SampleMoments => {
                if m.n() < 2 {
                    return Err(Error::Input("sample-moments preset needs n ≥ 2".into()));
                }
                let scale = 1.0 / (m.n() - 1) as f64;
                let sigma = m.gram().into_iter().map(|v| v * scale).collect();
                (m.column_mean(), Matrix::new(p, sigma)?)
            }
            PenaltyShape::NegTheta => {
                if m.theta().len() != p {
                    return Err(Error::Input("neg-theta preset needs dim θ = p".into()));
                }
                (m.theta().iter().map(|t| -t).collect(), Matrix::identity(p))
            }
            PenaltyShape::Custom { mu, sigma } => (mu(data, m), Matrix::new(p, sigma(data, m))?),
        };
        Penalty::new(self.tau, mu, sigma)
    }
}

/// A resolved penalty: `log τ`, `μ` and a validated `Σ`.
#[derive(Debug, Clone)]
pub struct Penalty {
    log_tau: f64,
    mu: Vec<f64>,
    sigma: Matrix,
    chol: Cholesky,
}

impl Penalty {
    pub fn new(tau: f64, mu: Vec<f64>, sigma: Matrix) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Input(format!("tau must be positive, got {tau}")));
        }
        if mu.len() != sigma.dim() || mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("penalty mean must be finite with length p".into()));
        }
        if !sigma.is_symmetric(1e-12) {
            return Err(Error::Input("penalty covariance must be symmetric".into()));
        }
        let chol = sigma
            .cholesky()
            .map_err(|_| Error::Input("penalty covariance is not positive definite".into()))?;
        Ok(Self { log_tau: tau.ln(), mu, sigma, chol })
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn log_tau(&self) -> f64 {
        self.log_tau
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    /// `λ = −Σ⁻¹μ`, the minimizer of the penalty alone.
    pub fn stationary_point(&self) -> Vec<f64> {
        self.chol.solve(&self.mu).into_iter().map(|v| -v).collect()
    }

    /// Log normal density of `N(μ, Σ)`; used by tests of the tilt identity.
    pub fn normal_logpdf(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        let z = self.chol.solve_lower(&d);
        -0.5 * z.iter().map(|v| v * v).sum::<f64>()
            - 0.5 * self.chol.log_det()
            - 0.5 * self.p() as f64 * (2.0 * PI).ln()
    }
}
