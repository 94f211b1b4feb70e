//! Experiment configuration: per-experiment defaults, overridden by a flat
//! `key = value` file and then by command-line flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use retel_core::Method;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Uniformity,
    Coverage,
    Kl,
    LambdaConvergence,
    LogratioCurve,
    Wilks,
    SmallArea,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Self::Uniformity,
        Self::Coverage,
        Self::Kl,
        Self::LambdaConvergence,
        Self::LogratioCurve,
        Self::Wilks,
        Self::SmallArea,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniformity => "uniformity",
            Self::Coverage => "coverage",
            Self::Kl => "kl",
            Self::LambdaConvergence => "lambda_convergence",
            Self::LogratioCurve => "logratio_curve",
            Self::Wilks => "wilks",
            Self::SmallArea => "small_area",
        }
    }

    /// Keys beyond the common ones that this experiment reads.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Self::Uniformity => &["n", "s", "l", "tau", "grid_points", "wetel_m"],
            Self::Coverage => &["n", "s", "l", "tau", "level", "grid_points", "wetel_m"],
            Self::Kl => &["n", "tau", "chains", "steps", "pilot_steps", "emit_density", "wetel_m"],
            Self::LambdaConvergence => &["theta", "m_exp_max", "tau"],
            Self::LogratioCurve => &["tau", "grid_points"],
            Self::Wilks => &["n", "tau", "penalty", "wetel_m"],
            Self::SmallArea => &["input", "areas", "tau", "chains", "steps", "pilot_steps", "level"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment `{s}`")))
    }
}

/// How `τ_n` depends on the sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule {
    Const(f64),
    LogN,
    /// `max(1, log n)`: 1 at n = 2, `log n` for every n ≥ 3.
    LogNAtLeastOne,
}

impl TauRule {
    pub fn tau(self, n: usize) -> f64 {
        let ln = (n as f64).ln();
        match self {
            Self::Const(c) => c,
            Self::LogN => ln,
            Self::LogNAtLeastOne => ln.max(1.0),
        }
    }

    pub fn label(self) -> String {
        match self {
            Self::Const(c) => format!("{c}"),
            Self::LogN => "log_n".into(),
            Self::LogNAtLeastOne => "max1_log_n".into(),
        }
    }
}

impl FromStr for TauRule {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log_n" => Ok(Self::LogN),
            "max1_log_n" => Ok(Self::LogNAtLeastOne),
            other => match other.parse::<f64>() {
                Ok(c) if c > 0.0 && c.is_finite() => Ok(Self::Const(c)),
                _ => Err(HarnessError::Config(format!(
                    "tau rule must be a positive number, log_n or max1_log_n, got `{other}`"
                ))),
            },
        }
    }
}

/// Penalty centre used by the Wilks study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyPreset {
    InvariantMean,
    Centered,
    /// `μ = c`, `Σ = 1` at every θ.
    Constant(f64),
}

impl FromStr for PenaltyPreset {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "invariant_mean" => Ok(Self::InvariantMean),
            "centered" => Ok(Self::Centered),
            _ => s
                .strip_prefix("constant:")
                .and_then(|c| c.parse::<f64>().ok())
                .filter(|c| c.is_finite())
                .map(Self::Constant)
                .ok_or_else(|| {
                    HarnessError::Config(format!(
                        "penalty must be invariant_mean, centered or constant:<mu>, got `{s}`"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub reps: usize,
    pub seed: u64,
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub n_values: Vec<usize>,
    pub s_values: Vec<f64>,
    pub l_values: Vec<f64>,
    pub tau_rules: Vec<TauRule>,
    pub theta_values: Vec<f64>,
    pub m_exp_max: u32,
    pub chains: usize,
    pub steps: usize,
    pub pilot_steps: usize,
    pub level: f64,
    pub grid_points: usize,
    pub wetel_m: usize,
    pub penalty: PenaltyPreset,
    pub emit_density: bool,
    pub input: Option<PathBuf>,
    pub areas: usize,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        use Method::*;
        let four = vec![RetelF, RetelR, Etel, Aetel];
        let mut cfg = Self {
            experiment,
            reps: 2000,
            seed: 20240501,
            threads: 1,
            out: None,
            methods: four.clone(),
            n_values: vec![5, 20, 50, 100],
            s_values: vec![1.0, 5.0],
            l_values: vec![0.0],
            tau_rules: vec![TauRule::Const(1.0), TauRule::LogN],
            theta_values: vec![1.0, 3.0],
            m_exp_max: 12,
            chains: 2,
            steps: 5000,
            pilot_steps: 1000,
            level: 0.95,
            grid_points: 2001,
            wetel_m: 64,
            penalty: PenaltyPreset::InvariantMean,
            emit_density: false,
            input: None,
            areas: 51,
        };
        match experiment {
            Experiment::Uniformity => {}
            Experiment::Coverage => {
                cfg.s_values = vec![0.5, 1.0, 5.0];
                cfg.l_values = vec![0.0, 2.0];
                cfg.tau_rules = vec![TauRule::LogN];
            }
            Experiment::Kl => {
                cfg.reps = 1000;
                cfg.n_values = vec![2, 4, 6, 8, 10];
                cfg.methods = vec![RetelF, RetelR, Etel];
                cfg.tau_rules = vec![TauRule::LogNAtLeastOne];
            }
            Experiment::LambdaConvergence => {
                cfg.reps = 1;
                cfg.tau_rules = vec![TauRule::Const(1.0)];
                cfg.methods = vec![Wetel, RetelF];
            }
            Experiment::LogratioCurve => {
                cfg.reps = 1;
                cfg.tau_rules = vec![TauRule::Const(1.0), TauRule::Const(5.0), TauRule::Const(25.0)];
                cfg.methods = vec![RetelF, RetelR];
                cfg.grid_points = 601;
            }
            Experiment::Wilks => {
                cfg.n_values = vec![5, 200];
                cfg.methods = vec![RetelF, RetelR, Etel];
                cfg.tau_rules = vec![TauRule::LogN];
            }
            Experiment::SmallArea => {
                cfg.reps = 1;
                cfg.methods = vec![RetelF, RetelR, El, Etel];
                cfg.tau_rules = vec![TauRule::LogN];
                cfg.chains = 4;
                cfg.steps = 250_000;
                cfg.pilot_steps = 5000;
            }
        }
        cfg
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| match e {
                    HarnessError::Config(msg) => HarnessError::Config(format!("line {}: {msg}", lineno + 1)),
                    other => other,
                })?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        const COMMON: [&str; 6] = ["experiment", "reps", "seed", "threads", "out", "methods"];
        if !COMMON.contains(&key) && !self.experiment.keys().contains(&key) {
            return Err(HarnessError::Config(format!("unknown key `{key}` for {}", self.experiment)));
        }
        match key {
            "experiment" => {
                let e: Experiment = value.parse()?;
                if e != self.experiment {
                    return Err(HarnessError::Config(format!(
                        "file is for `{e}` but `{}` was requested",
                        self.experiment
                    )));
                }
            }
            "reps" => self.reps = scalar(key, value)?,
            "seed" => self.seed = scalar(key, value)?,
            "threads" => self.threads = scalar(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "methods" => {
                self.methods = list(value)
                    .map(|v| v.parse::<Method>().map_err(|e| HarnessError::Config(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "n" => self.n_values = parse_list(key, value)?,
            "s" => self.s_values = parse_list(key, value)?,
            "l" => self.l_values = parse_list(key, value)?,
            "tau" => self.tau_rules = list(value).map(str::parse).collect::<Result<_>>()?,
            "theta" => self.theta_values = parse_list(key, value)?,
            "m_exp_max" => self.m_exp_max = scalar(key, value)?,
            "chains" => self.chains = scalar(key, value)?,
            "steps" => self.steps = scalar(key, value)?,
            "pilot_steps" => self.pilot_steps = scalar(key, value)?,
            "level" => self.level = scalar(key, value)?,
            "grid_points" => self.grid_points = scalar(key, value)?,
            "wetel_m" => self.wetel_m = scalar(key, value)?,
            "penalty" => self.penalty = value.parse()?,
            "emit_density" => self.emit_density = scalar(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "areas" => self.areas = scalar(key, value)?,
            _ => unreachable!("key table and match arms disagree"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.reps == 0 {
            return bad("reps must be positive".into());
        }
        if self.threads == 0 {
            return bad("threads must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        let min_n = if self.experiment == Experiment::Kl { 2 } else { 1 };
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < min_n) {
            return bad(format!("n values must be at least {min_n}"));
        }
        if self.s_values.is_empty() || self.s_values.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("s values must be positive".into());
        }
        if self.l_values.is_empty() || self.l_values.iter().any(|l| !l.is_finite()) {
            return bad("l values must be finite".into());
        }
        if self.tau_rules.is_empty() {
            return bad("at least one tau rule is required".into());
        }
        if self.theta_values.is_empty() || self.theta_values.iter().any(|t| !t.is_finite()) {
            return bad("theta values must be finite".into());
        }
        if !(1..=20).contains(&self.m_exp_max) {
            return bad("m_exp_max must lie in 1..=20".into());
        }
        if self.chains < 2 {
            return bad("at least two chains are needed for diagnostics".into());
        }
        if self.steps < 20 || self.pilot_steps < 10 {
            return bad("steps must be ≥ 20 and pilot_steps ≥ 10".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)".into());
        }
        if self.grid_points < 3 {
            return bad("grid_points must be at least 3".into());
        }
        if self.wetel_m == 0 {
            return bad("wetel_m must be positive".into());
        }
        if self.areas < 3 {
            return bad("areas must be at least 3".into());
        }
        Ok(())
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty())
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| HarnessError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    list(value).map(|v| scalar(key, v)).collect()
}
