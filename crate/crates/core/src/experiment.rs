//! Named verification experiments.
//!
//! An [`ExperimentConfig`] selects one [`Experiment`] plus its parameters;
//! [`run_experiment`] executes it and condenses the outcome into a
//! [`TestReport`]. Replicates run in parallel but every replicate draws from
//! its own derived seed, so reports are reproducible bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::curve::{coverage_check, wall_area_scaled, Window};
use crate::error::{invalid, Error, Result};
use crate::oracle::{levy_local_time_samples, sample_identity_pairs, DensityModel, Side};
use crate::rng::derive_seed;
use crate::scaling::{default_eps, donsker_rescale, step_at_time};
use crate::stats::{ks_two_sample, BinnedModel, GridBinning, KsOutcome, TestReport, Verdict};
use crate::walk::simulate_walk;

/// Master seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Relative tolerance of the wall-area identity.
pub const AREA_TOLERANCE: f64 = 1e-9;

/// Fraction of coverage runs that must fill the window.
pub const COVERAGE_QUORUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Wall area equals `|c|·d·t` for every replicate.
    Area,
    /// Chi-square of `(B(t), ℓ(B(t), t))` against the exact joint law.
    Density,
    /// `(B, ℓ(B, t))` against `(B, ℓ(0, t))`.
    IdentityReversal,
    /// `(|B|, ℓ(0, t))` against `(S − B, S)`.
    IdentityLevy,
    /// `((S − B)·I, S)` against `(B, ℓ(B, t))`.
    IdentitySigned,
    /// Rescaled occupation count at 0 against exact draws of `ℓ(0, t)`.
    Knight,
    /// Fraction of walks whose curve covers a window within a step budget.
    Coverage,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Area,
        Experiment::Density,
        Experiment::IdentityReversal,
        Experiment::IdentityLevy,
        Experiment::IdentitySigned,
        Experiment::Knight,
        Experiment::Coverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Area => "area",
            Experiment::Density => "density",
            Experiment::IdentityReversal => "identity-reversal",
            Experiment::IdentityLevy => "identity-levy",
            Experiment::IdentitySigned => "identity-signed",
            Experiment::Knight => "knight",
            Experiment::Coverage => "coverage",
        }
    }

    /// Replicate count used when the config leaves it unset.
    pub fn default_replicates(self) -> usize {
        match self {
            Experiment::Area => 20,
            Experiment::Density => 10_000,
            Experiment::IdentityReversal
            | Experiment::IdentityLevy
            | Experiment::IdentitySigned
            | Experiment::Knight => 2_000,
            Experiment::Coverage => 10,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    /// Accepts the full names and the short forms `reversal`, `levy`, `signed`.
    fn from_str(s: &str) -> Result<Self> {
        let short = match s {
            "reversal" => Some(Experiment::IdentityReversal),
            "levy" => Some(Experiment::IdentityLevy),
            "signed" => Some(Experiment::IdentitySigned),
            _ => None,
        };
        short
            .or_else(|| Experiment::ALL.into_iter().find(|e| e.name() == s))
            .ok_or_else(|| Error::Unknown { kind: "experiment", name: s.into() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// `None` picks [`Experiment::default_replicates`].
    pub replicates: Option<usize>,
    pub n: u64,
    pub t: f64,
    /// Band half-width; `None` means `n^(-1/4)`.
    pub eps: Option<f64>,
    pub seed: u64,
    pub alpha: f64,
    pub c: f64,
    pub d: f64,
    pub window: Window,
    pub delta: f64,
    pub step_budget: u64,
    pub level_bins: usize,
    pub height_bins: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            replicates: None,
            n: 10_000,
            t: 1.0,
            eps: None,
            seed: DEFAULT_SEED,
            alpha: 0.001,
            c: 1.0,
            d: 1.0,
            window: Window { x_lo: -1.0, x_hi: 1.0, h_hi: 0.5 },
            delta: 0.05,
            step_budget: 100_000_000,
            level_bins: 12,
            height_bins: 12,
        }
    }

    pub fn replicates(&self) -> usize {
        self.replicates.unwrap_or_else(|| self.experiment.default_replicates())
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or_else(|| default_eps(self.n))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidScale("n must be at least 1".into()));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(invalid(format!("t must be positive, got {}", self.t)));
        }
        let eps = self.eps();
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {eps}")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.replicates() == 0 {
            return Err(invalid("at least one replicate is required"));
        }
        if self.c == 0.0 || !self.c.is_finite() {
            return Err(Error::InvalidScale(format!("c must be nonzero, got {}", self.c)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::InvalidScale(format!("d must be positive, got {}", self.d)));
        }
        if self.level_bins == 0 || self.height_bins == 0 {
            return Err(invalid("bin counts must be positive"));
        }
        Ok(())
    }

    fn base_params(&self) -> BTreeMap<String, Value> {
        let mut p = BTreeMap::new();
        p.insert("experiment".into(), json!(self.experiment.name()));
        p.insert("n".into(), json!(self.n));
        p.insert("t".into(), json!(self.t));
        p.insert("eps".into(), json!(self.eps()));
        p.insert("replicates".into(), json!(self.replicates()));
        p.insert("alpha".into(), json!(self.alpha));
        p
    }
}

/// Runs the configured experiment. Same config, same report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TestReport> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Area => area(cfg),
        Experiment::Density => density(cfg),
        Experiment::IdentityReversal => identity(cfg, Side::Lhs, Side::Reversal),
        Experiment::IdentityLevy => identity(cfg, Side::Reversal, Side::Levy),
        Experiment::IdentitySigned => identity(cfg, Side::Signed, Side::Lhs),
        Experiment::Knight => knight(cfg),
        Experiment::Coverage => coverage(cfg),
    }
}

/// Master seed for one side of a comparison, so the two samples are
/// independent.
fn side_seed(seed: u64, side: Side) -> u64 {
    let tag = match side {
        Side::Lhs => 0,
        Side::Reversal => 1,
        Side::Levy => 2,
        Side::Signed => 3,
    };
    derive_seed(seed, u64::MAX - tag)
}

fn area(cfg: &ExperimentConfig) -> Result<TestReport> {
    let steps = step_at_time(cfg.n, cfg.t) as usize;
    let eps = cfg.eps();
    let target = cfg.c.abs() * cfg.d * cfg.t;
    let errors: Vec<f64> = (0..cfg.replicates() as u64)
        .into_par_iter()
        .map(|r| {
            let walk = simulate_walk(steps, derive_seed(cfg.seed, r));
            let path = donsker_rescale(&walk, cfg.n)?;
            Ok((wall_area_scaled(&path, cfg.t, eps, cfg.c, cfg.d)? - target).abs())
        })
        .collect::<Result<_>>()?;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let tolerance = AREA_TOLERANCE * target;
    let mut params = cfg.base_params();
    params.insert("c".into(), json!(cfg.c));
    params.insert("d".into(), json!(cfg.d));
    params.insert("tolerance".into(), json!(tolerance));
    Ok(TestReport {
        test_name: cfg.experiment.name().into(),
        statistic: worst,
        p_value: None,
        n_samples: errors.len() as u64,
        seed: cfg.seed,
        params,
        verdict: if worst <= tolerance { Verdict::Pass } else { Verdict::Fail },
    })
}

fn density(cfg: &ExperimentConfig) -> Result<TestReport> {
    let model = DensityModel::new(cfg.t)?;
    let steps = step_at_time(cfg.n, cfg.t);
    let binning = GridBinning::lattice_aligned(&model, cfg.level_bins, cfg.height_bins, cfg.n, steps)?;
    let binned = BinnedModel::new(&model, binning);
    let samples = sample_identity_pairs(cfg.t, cfg.seed, cfg.n, cfg.replicates(), Side::Lhs)?;
    let outcome = binned.test(&samples)?;
    let mut params = cfg.base_params();
    params.insert("estimator".into(), json!("occupation"));
    params.insert("bins".into(), json!([cfg.level_bins, cfg.height_bins]));
    params.insert("kept_bins".into(), json!(outcome.kept_bins));
    params.insert("dof".into(), json!(outcome.dof));
    Ok(TestReport::from_p_value(
        cfg.experiment.name(),
        outcome.statistic,
        outcome.p_value,
        samples.len() as u64,
        cfg.seed,
        cfg.alpha,
        params,
    ))
}

/// Coordinates compared between the two sides of an identity.
fn projections(pairs: &[(f64, f64)], fold: bool) -> [Vec<f64>; 3] {
    let first = pairs.iter().map(|&(y, _)| if fold { y.abs() } else { y }).collect();
    let second = pairs.iter().map(|&(_, s)| s).collect();
    let sum = pairs.iter().map(|&(y, s)| y.abs() + s).collect();
    [first, second, sum]
}

fn identity(cfg: &ExperimentConfig, a: Side, b: Side) -> Result<TestReport> {
    let count = cfg.replicates();
    let left = sample_identity_pairs(cfg.t, side_seed(cfg.seed, a), cfg.n, count, a)?;
    let right = sample_identity_pairs(cfg.t, side_seed(cfg.seed, b), cfg.n, count, b)?;
    // (S − B, S) only matches the folded level |B|
    let fold = b == Side::Levy;
    let lp = projections(&left, fold);
    let rp = projections(&right, fold);
    let labels = ["level", "height", "sum"];
    let mut params = cfg.base_params();
    params.insert("sides".into(), json!([a.to_string(), b.to_string()]));
    let mut worst_d: f64 = 0.0;
    let mut worst_p: f64 = 1.0;
    for ((x, y), label) in lp.iter().zip(&rp).zip(labels) {
        let KsOutcome { statistic, p_value, .. } = ks_two_sample(x, y)?;
        params.insert(format!("ks_{label}"), json!({ "statistic": statistic, "p_value": p_value }));
        worst_d = worst_d.max(statistic);
        worst_p = worst_p.min(p_value);
    }
    Ok(TestReport::from_p_value(
        cfg.experiment.name(),
        worst_d,
        worst_p,
        (left.len() + right.len()) as u64,
        cfg.seed,
        cfg.alpha,
        params,
    ))
}

fn knight(cfg: &ExperimentConfig) -> Result<TestReport> {
    let count = cfg.replicates();
    let walks = sample_identity_pairs(cfg.t, side_seed(cfg.seed, Side::Reversal), cfg.n, count, Side::Reversal)?;
    let simulated: Vec<f64> = walks.iter().map(|&(_, s)| s).collect();
    let exact = levy_local_time_samples(cfg.t, side_seed(cfg.seed, Side::Levy), count)?;
    let outcome = ks_two_sample(&simulated, &exact)?;
    let mut params = cfg.base_params();
    params.insert("level".into(), json!(0.0));
    params.insert("exact_p".into(), json!(outcome.exact));
    Ok(TestReport::from_p_value(
        cfg.experiment.name(),
        outcome.statistic,
        outcome.p_value,
        (simulated.len() + exact.len()) as u64,
        cfg.seed,
        cfg.alpha,
        params,
    ))
}

fn coverage(cfg: &ExperimentConfig) -> Result<TestReport> {
    let window = Window::new(cfg.window.x_lo, cfg.window.x_hi, cfg.window.h_hi)?;
    let runs = cfg.replicates();
    let reports = (0..runs as u64)
        .into_par_iter()
        .map(|r| coverage_check(derive_seed(cfg.seed, r), window, cfg.delta, cfg.step_budget, cfg.n))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<Option<f64>> = reports.iter().map(|r| r.cover_time()).collect();
    let covered = times.iter().flatten().count();
    let quorum = (COVERAGE_QUORUM * runs as f64).ceil() as usize;
    let mut params = cfg.base_params();
    params.insert("window".into(), json!([window.x_lo, window.x_hi, 0.0, window.h_hi]));
    params.insert("delta".into(), json!(cfg.delta));
    params.insert("step_budget".into(), json!(cfg.step_budget));
    params.insert("covered_runs".into(), json!(covered));
    params.insert("required_runs".into(), json!(quorum));
    params.insert("cover_times".into(), json!(times));
    Ok(TestReport {
        test_name: cfg.experiment.name().into(),
        statistic: covered as f64 / runs as f64,
        p_value: None,
        n_samples: runs as u64,
        seed: cfg.seed,
        params,
        verdict: if covered >= quorum { Verdict::Pass } else { Verdict::Fail },
    })
}
