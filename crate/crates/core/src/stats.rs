//! Two-sample Kolmogorov–Smirnov, 2-D chi-square goodness of fit against the
//! fixed-time law, and the [`TestReport`] record every experiment returns.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::oracle::DensityModel;
use crate::rng::{derive_seed, stream, Lane};

/// Below this product of sample sizes the KS p-value is enumerated exactly.
pub const KS_EXACT_LIMIT: u64 = 10_000;
/// Terms kept in the Kolmogorov series.
pub const KS_SERIES_TERMS: u32 = 100;
/// Smallest expected count a chi-square cell may have after merging.
pub const MIN_EXPECTED: f64 = 5.0;
/// Smallest sample a 2-D chi-square test accepts.
pub const MIN_CHI2_SAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    /// `sup |F_a − F_b|`.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

fn sorted(xs: &[f64], name: &'static str) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptySample(name));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument(format!("sample `{name}` contains NaN")));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// `max |i·n − j·m|` over the merged order statistics, i.e. `D·m·n`.
fn scaled_distance(a: &[f64], b: &[f64]) -> u64 {
    let (m, n) = (a.len() as i128, b.len() as i128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0i128;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        best = best.max((i as i128 * n - j as i128 * m).abs());
    }
    best as u64
}

/// Survival function `P{K > λ}` of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi-transformed series, fast for small λ.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=KS_SERIES_TERMS)
            .map(|k| (c * ((2 * k - 1) as f64).powi(2)).exp())
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        1.0 - cdf
    } else {
        2.0 * (1..=KS_SERIES_TERMS)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum::<f64>()
    };
    p.clamp(0.0, 1.0)
}

/// Exact `P{D ≥ d}` for continuous samples of sizes `m`, `n`, by counting
/// monotone lattice paths from `(0, 0)` to `(m, n)` that touch
/// `|i·n − j·m| ≥ d·m·n`.
fn ks_exact_p(m: usize, n: usize, scaled_d: u64) -> f64 {
    if scaled_d == 0 {
        return 1.0;
    }
    let outside = |i: usize, j: usize| (i as i128 * n as i128 - j as i128 * m as i128).unsigned_abs() >= scaled_d as u128;
    // all paths to (i, j), and paths to (i, j) that have already escaped
    let mut all = vec![0.0f64; n + 1];
    let mut escaped = vec![0.0f64; n + 1];
    for i in 0..=m {
        for j in 0..=n {
            if i == 0 && j == 0 {
                all[0] = 1.0;
                escaped[0] = 0.0;
                continue;
            }
            let (up_all, up_esc) = if i > 0 { (all[j], escaped[j]) } else { (0.0, 0.0) };
            let (left_all, left_esc) = if j > 0 { (all[j - 1], escaped[j - 1]) } else { (0.0, 0.0) };
            all[j] = up_all + left_all;
            escaped[j] = if outside(i, j) { all[j] } else { up_esc + left_esc };
        }
    }
    (escaped[n] / all[n]).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test.
///
/// The p-value is exact when `|a|·|b| ≤ 10⁴` (treating the samples as
/// continuous, so ties make it conservative) and otherwise comes from the
/// Kolmogorov distribution at `(√nₑ + 0.12 + 0.11/√nₑ)·D` with
/// `nₑ = |a||b|/(|a| + |b|)`, accurate for sizes of 50 and up.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsOutcome> {
    let a = sorted(a, "a")?;
    let b = sorted(b, "b")?;
    let (m, n) = (a.len(), b.len());
    let scaled = scaled_distance(&a, &b);
    let mn = m as f64 * n as f64;
    let statistic = scaled as f64 / mn;
    if (m as u64).saturating_mul(n as u64) <= KS_EXACT_LIMIT {
        return Ok(KsOutcome { statistic, p_value: ks_exact_p(m, n, scaled), exact: true });
    }
    let en = (mn / (m + n) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * statistic;
    Ok(KsOutcome { statistic, p_value: kolmogorov_sf(lambda), exact: false })
}

/// `Σ (O − E)² / E` over paired cells.
pub fn pearson_statistic(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum()
}

/// Product grid of level edges × height edges. The outer edges may be
/// infinite; every `(y, s)` with `s ≥ 0` falls in exactly one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBinning {
    y_edges: Vec<f64>,
    s_edges: Vec<f64>,
}

impl GridBinning {
    /// Edges at the `i/levels` quantiles of the level marginal and the
    /// `j/heights` quantiles of the height marginal.
    pub fn equiprobable(model: &DensityModel, levels: usize, heights: usize) -> Result<Self> {
        if levels == 0 || heights == 0 {
            return Err(Error::Binning("need at least one bin per axis".into()));
        }
        let mut y_edges = vec![f64::NEG_INFINITY];
        y_edges.extend((1..levels).map(|i| model.level_quantile(i as f64 / levels as f64)));
        y_edges.push(f64::INFINITY);
        let mut s_edges = vec![0.0];
        s_edges.extend((1..heights).map(|j| model.height_quantile(j as f64 / heights as f64)));
        s_edges.push(f64::INFINITY);
        Self::with_edges(y_edges, s_edges)
    }

    /// Equiprobable edges moved to the nearest midpoints between the atoms
    /// of a rescaled walk after `steps` steps at scale `n`.
    ///
    /// Levels `S/√n` live on sites of the same parity as `steps`, heights
    /// `L/√n` on positive integers. Putting every edge halfway between two
    /// atoms makes each atom stand for the cell around it, so the lattice
    /// does not bias the comparison with the continuous law. Edges that
    /// collapse onto the same midpoint are merged.
    pub fn lattice_aligned(model: &DensityModel, levels: usize, heights: usize, n: u64, steps: u64) -> Result<Self> {
        let base = Self::equiprobable(model, levels, heights)?;
        let root = (n as f64).sqrt();
        let offset = ((steps + 1) % 2) as f64;
        let snap_level = |e: f64| {
            if e.is_finite() {
                (((e * root - offset) / 2.0).round() * 2.0 + offset) / root
            } else {
                e
            }
        };
        let snap_height = |e: f64| {
            if e.is_finite() && e > 0.0 {
                ((e * root - 0.5).round().max(0.0) + 0.5) / root
            } else {
                e
            }
        };
        let mut y: Vec<f64> = base.y_edges.iter().map(|&e| snap_level(e)).collect();
        let mut s: Vec<f64> = base.s_edges.iter().map(|&e| snap_height(e)).collect();
        y.dedup();
        s.dedup();
        Self::with_edges(y, s)
    }

    pub fn with_edges(y_edges: Vec<f64>, s_edges: Vec<f64>) -> Result<Self> {
        let increasing = |e: &[f64]| e.len() >= 2 && e.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&y_edges) || !increasing(&s_edges) {
            return Err(Error::Binning("edges must increase strictly".into()));
        }
        if y_edges[0] != f64::NEG_INFINITY || *y_edges.last().expect("len >= 2") != f64::INFINITY {
            return Err(Error::Binning("level edges must span the real line".into()));
        }
        if s_edges[0] != 0.0 || *s_edges.last().expect("len >= 2") != f64::INFINITY {
            return Err(Error::Binning("height edges must span [0, ∞)".into()));
        }
        Ok(Self { y_edges, s_edges })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.y_edges.len() - 1, self.s_edges.len() - 1)
    }

    pub fn y_edges(&self) -> &[f64] {
        &self.y_edges
    }

    pub fn s_edges(&self) -> &[f64] {
        &self.s_edges
    }

    /// Row-major cell index (`level_bin * heights + height_bin`).
    pub fn locate(&self, y: f64, s: f64) -> Option<usize> {
        if !(s >= 0.0) || y.is_nan() {
            return None;
        }
        let i = self.y_edges.partition_point(|&e| e <= y) - 1;
        let j = self.s_edges.partition_point(|&e| e <= s) - 1;
        Some(i * self.shape().1 + j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Outcome {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    pub kept_bins: usize,
}

/// A grid binning with its cell probabilities under a [`DensityModel`].
#[derive(Debug, Clone)]
pub struct BinnedModel {
    binning: GridBinning,
    probs: Vec<f64>,
}

impl BinnedModel {
    /// Integrates the joint density over every cell (cells in parallel).
    pub fn new(model: &DensityModel, binning: GridBinning) -> Self {
        let (ny, ns) = binning.shape();
        let probs = (0..ny * ns)
            .into_par_iter()
            .map(|c| {
                let (i, j) = (c / ns, c % ns);
                model.rect_probability(
                    binning.y_edges[i],
                    binning.y_edges[i + 1],
                    binning.s_edges[j],
                    binning.s_edges[j + 1],
                )
            })
            .collect();
        Self { binning, probs }
    }

    pub fn binning(&self) -> &GridBinning {
        &self.binning
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Merges cells so every group expects at least [`MIN_EXPECTED`] of
    /// `total` samples. Within each level column, height cells are pooled
    /// from the top down; a short remainder joins the last pooled group.
    pub fn merge_groups(&self, total: usize) -> Result<Vec<Vec<usize>>> {
        let (ny, ns) = self.binning.shape();
        let total = total as f64;
        let mut groups = Vec::new();
        for i in 0..ny {
            let mut column: Vec<Vec<usize>> = Vec::new();
            let mut current = Vec::new();
            let mut mass = 0.0;
            for j in (0..ns).rev() {
                let c = i * ns + j;
                current.push(c);
                mass += self.probs[c] * total;
                if mass >= MIN_EXPECTED {
                    column.push(std::mem::take(&mut current));
                    mass = 0.0;
                }
            }
            if !current.is_empty() {
                match column.last_mut() {
                    Some(last) => last.extend(current),
                    None => {
                        return Err(Error::Binning(format!(
                            "level column {i} expects fewer than {MIN_EXPECTED} samples"
                        )))
                    }
                }
            }
            groups.extend(column);
        }
        if groups.len() < 2 {
            return Err(Error::Binning("fewer than two cells left after merging".into()));
        }
        Ok(groups)
    }

    /// Pearson test of raw cell counts (row-major, as [`GridBinning::locate`]).
    pub fn test_counts(&self, counts: &[u64]) -> Result<Chi2Outcome> {
        let total: u64 = counts.iter().sum();
        if (total as usize) < MIN_CHI2_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "chi-square needs at least {MIN_CHI2_SAMPLES} samples, got {total}"
            )));
        }
        if counts.len() != self.probs.len() {
            return Err(Error::InvalidArgument("count vector does not match the binning".into()));
        }
        let groups = self.merge_groups(total as usize)?;
        let observed: Vec<f64> = groups.iter().map(|g| g.iter().map(|&c| counts[c] as f64).sum()).collect();
        let expected: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|&c| self.probs[c]).sum::<f64>() * total as f64)
            .collect();
        let statistic = pearson_statistic(&observed, &expected);
        let dof = groups.len() - 1;
        let p_value = ChiSquared::new(dof as f64).expect("dof >= 1").sf(statistic);
        Ok(Chi2Outcome { statistic, p_value, dof, kept_bins: groups.len() })
    }

    pub fn counts(&self, samples: &[(f64, f64)]) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.probs.len()];
        for &(y, s) in samples {
            let c = self
                .binning
                .locate(y, s)
                .ok_or_else(|| Error::InvalidArgument(format!("sample ({y}, {s}) is outside the half plane")))?;
            counts[c] += 1;
        }
        Ok(counts)
    }

    pub fn test(&self, samples: &[(f64, f64)]) -> Result<Chi2Outcome> {
        self.test_counts(&self.counts(samples)?)
    }
}

/// Chi-square goodness of fit of `(y, s)` samples to `model` on `binning`.
pub fn chi2_gof_2d(samples: &[(f64, f64)], model: &DensityModel, binning: &GridBinning) -> Result<Chi2Outcome> {
    BinnedModel::new(model, binning.clone()).test(samples)
}

/// Runs the chi-square test `runs` times on exact draws from the model
/// itself and returns how many runs rejected at `alpha`.
pub fn null_rejections(binned: &BinnedModel, model: &DensityModel, runs: usize, samples: usize, seed: u64, alpha: f64) -> Result<usize> {
    let outcomes: Vec<Result<Chi2Outcome>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(derive_seed(seed, r), Lane::Gaussian);
            let draws: Vec<(f64, f64)> = (0..samples).map(|_| model.sample(&mut rng)).collect();
            binned.test(&draws)
        })
        .collect();
    let mut rejected = 0;
    for o in outcomes {
        if o?.p_value <= alpha {
            rejected += 1;
        }
    }
    Ok(rejected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Result of one verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub n_samples: u64,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub verdict: Verdict,
}

impl TestReport {
    /// Report whose verdict is `pass` iff `p_value > alpha`.
    pub fn from_p_value(
        test_name: impl Into<String>,
        statistic: f64,
        p_value: f64,
        n_samples: u64,
        seed: u64,
        alpha: f64,
        params: BTreeMap<String, serde_json::Value>,
    ) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            test_name: test_name.into(),
            statistic,
            p_value: Some(p_value),
            n_samples,
            seed,
            params,
            verdict: if p_value > alpha { Verdict::Pass } else { Verdict::Fail },
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Brute-force ECDF distance: evaluate both step functions at every
    /// sample point.
    fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |xs: &[f64], v: f64| xs.iter().filter(|x| **x <= v).count() as f64 / xs.len() as f64;
        a.iter()
            .chain(b)
            .map(|&v| (ecdf(a, v) - ecdf(b, v)).abs())
            .fold(0.0, f64::max)
    }

    /// Brute-force exact p-value: enumerate every split of the pooled
    /// ranks into groups of sizes m and n.
    fn brute_exact_p(m: usize, n: usize, d: f64) -> f64 {
        let total = m + n;
        let mut hits = 0u64;
        let mut all = 0u64;
        for mask in 0u32..(1 << total) {
            if mask.count_ones() as usize != m {
                continue;
            }
            all += 1;
            let (mut i, mut j, mut best) = (0.0f64, 0.0f64, 0.0f64);
            for k in 0..total {
                if mask >> k & 1 == 1 { i += 1.0 } else { j += 1.0 }
                best = best.max((i / m as f64 - j / n as f64).abs());
            }
            if best >= d - 1e-12 {
                hits += 1;
            }
        }
        hits as f64 / all as f64
    }

    #[test]
    fn ks_examples() {
        let a = [0.3, 1.0, 2.5, 7.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        assert_eq!(ks_two_sample(&a, &a).unwrap().p_value, 1.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0, 5.0]).unwrap().statistic, 1.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.5]).unwrap().statistic, 0.5);
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::EmptySample("a"))));
        assert!(ks_two_sample(&[1.0], &[]).is_err());
        assert!(ks_two_sample(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn ks_statistic_matches_brute_force_with_ties() {
        let mut rng = stream(1, Lane::Gaussian);
        for _ in 0..200 {
            let a: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random_range(0..8) as f64).collect();
            let b: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random_range(0..8) as f64).collect();
            assert_abs_diff_eq!(ks_two_sample(&a, &b).unwrap().statistic, brute_ks(&a, &b), epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_p_matches_enumeration() {
        for (m, n) in [(3, 4), (5, 5), (2, 9), (6, 7), (1, 1)] {
            let a: Vec<f64> = (0..m).map(|i| i as f64 * 2.0).collect();
            for shift in [-3.0, 0.5, 2.0, 7.5] {
                let b: Vec<f64> = (0..n).map(|j| j as f64 * 1.3 + shift).collect();
                let out = ks_two_sample(&a, &b).unwrap();
                assert!(out.exact);
                assert_abs_diff_eq!(out.p_value, brute_exact_p(m, n, out.statistic), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_and_asymptotic_agree_near_the_switch() {
        // 100 x 100 is the largest balanced exact case
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 18.5).collect();
        let exact = ks_two_sample(&a, &b).unwrap();
        assert!(exact.exact);
        let en = 50.0f64.sqrt();
        let asym = kolmogorov_sf((en + 0.12 + 0.11 / en) * exact.statistic);
        assert!((exact.p_value - asym).abs() < 0.01, "{exact:?} {asym}");
        let mut a2 = a.clone();
        a2.push(-0.5);
        assert!(!ks_two_sample(&a2, &b).unwrap().exact);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Kolmogorov survival at its 5% and 1% critical points.
        assert_abs_diff_eq!(kolmogorov_sf(1.358_098_8), 0.05, epsilon = 1e-6);
        assert_abs_diff_eq!(kolmogorov_sf(1.627_618_8), 0.01, epsilon = 1e-6);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert_abs_diff_eq!(kolmogorov_sf(0.1), 1.0, epsilon = 1e-15);
        // both branches agree at the switch
        assert_abs_diff_eq!(kolmogorov_sf(1.179_999_999), kolmogorov_sf(1.18), epsilon = 1e-8);
    }

    #[test]
    fn equiprobable_bins_are_normalised() {
        let model = DensityModel::new(1.0).unwrap();
        let binned = BinnedModel::new(&model, GridBinning::equiprobable(&model, 12, 12).unwrap());
        let total: f64 = binned.probabilities().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        let (ny, ns) = binned.binning().shape();
        for i in 0..ny {
            let col: f64 = (0..ns).map(|j| binned.probabilities()[i * ns + j]).sum();
            assert_abs_diff_eq!(col, 1.0 / 12.0, epsilon = 1e-8);
        }
        for j in 0..ns {
            let row: f64 = (0..ny).map(|i| binned.probabilities()[i * ns + j]).sum();
            assert_abs_diff_eq!(row, 1.0 / 12.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn lattice_edges_sit_between_atoms() {
        let model = DensityModel::new(1.0).unwrap();
        let b = GridBinning::lattice_aligned(&model, 12, 12, 10_000, 10_000).unwrap();
        assert_eq!(b.shape(), (12, 12));
        for e in &b.y_edges()[1..12] {
            let site = e * 100.0;
            assert!(((site - 1.0) / 2.0 - ((site - 1.0) / 2.0).round()).abs() < 1e-9, "{e}");
        }
        assert_eq!(b.y_edges()[6].abs(), 0.01);
        for e in &b.s_edges()[1..12] {
            let frac = (e * 100.0).fract();
            assert!((frac - 0.5).abs() < 1e-9, "{e}");
        }
        let odd = GridBinning::lattice_aligned(&model, 12, 12, 10_000, 9_999).unwrap();
        assert_eq!(odd.y_edges()[6], 0.0);
        // coarse lattices merge edges that land on the same midpoint
        let coarse = GridBinning::lattice_aligned(&model, 12, 12, 4, 4).unwrap();
        assert!(coarse.shape().0 < 12 && coarse.shape().1 < 12);
    }

    #[test]
    fn synthetic_multinomial_passes() {
        let model = DensityModel::new(1.0).unwrap();
        let binned = BinnedModel::new(&model, GridBinning::equiprobable(&model, 12, 12).unwrap());
        let cdf: Vec<f64> = binned
            .probabilities()
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let mut rng = stream(99, Lane::Gaussian);
        let mut counts = vec![0u64; cdf.len()];
        for _ in 0..100_000 {
            let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
            counts[cdf.partition_point(|&c| c < u).min(cdf.len() - 1)] += 1;
        }
        let out = binned.test_counts(&counts).unwrap();
        assert!(out.p_value > 0.001, "{out:?}");
    }

    #[test]
    fn gross_mismatch_is_rejected() {
        let model = DensityModel::new(1.0).unwrap();
        let samples = vec![(0.01, 0.01); 1000];
        let out = chi2_gof_2d(&samples, &model, &GridBinning::equiprobable(&model, 12, 12).unwrap()).unwrap();
        assert!(out.p_value < 1e-6);
    }

    #[test]
    fn chi2_errors() {
        let model = DensityModel::new(1.0).unwrap();
        let binning = GridBinning::equiprobable(&model, 12, 12).unwrap();
        assert!(chi2_gof_2d(&vec![(0.0, 0.5); 499], &model, &binning).is_err());
        assert!(chi2_gof_2d(&vec![(0.0, -0.5); 600], &model, &binning).is_err());
        // 200 level columns each expect 600/200 = 3 < 5 samples
        let fine = GridBinning::equiprobable(&model, 200, 2).unwrap();
        assert!(matches!(chi2_gof_2d(&vec![(0.0, 0.5); 600], &model, &fine), Err(Error::Binning(_))));
        assert!(GridBinning::with_edges(vec![0.0, 1.0], vec![0.0, f64::INFINITY]).is_err());
        assert!(GridBinning::with_edges(vec![f64::NEG_INFINITY, f64::INFINITY], vec![0.5, f64::INFINITY]).is_err());
        let one = GridBinning::with_edges(vec![f64::NEG_INFINITY, f64::INFINITY], vec![0.0, f64::INFINITY]).unwrap();
        assert!(matches!(chi2_gof_2d(&vec![(0.0, 0.5); 600], &model, &one), Err(Error::Binning(_))));
    }

    #[test]
    fn merged_groups_partition_cells_and_meet_floor() {
        let model = DensityModel::new(1.0).unwrap();
        let binned = BinnedModel::new(&model, GridBinning::equiprobable(&model, 12, 12).unwrap());
        for total in [500usize, 2000, 10_000] {
            let groups = binned.merge_groups(total).unwrap();
            let mut cells: Vec<usize> = groups.iter().flatten().copied().collect();
            cells.sort_unstable();
            assert_eq!(cells, (0..144).collect::<Vec<_>>());
            for g in &groups {
                let e: f64 = g.iter().map(|&c| binned.probabilities()[c]).sum::<f64>() * total as f64;
                assert!(e >= MIN_EXPECTED);
            }
        }
    }

    #[test]
    fn report_verdict_follows_alpha() {
        let r = TestReport::from_p_value("x", 1.0, 0.002, 10, 1, 0.001, BTreeMap::new());
        assert!(r.passed());
        let r = TestReport::from_p_value("x", 1.0, 0.001, 10, 1, 0.001, BTreeMap::new());
        assert!(!r.passed());
        let r = TestReport::from_p_value("x", 1.0, 1.5, 10, 1, 0.001, BTreeMap::new());
        assert_eq!(r.p_value, Some(1.0));
    }

    #[test]
    fn report_json_keys_in_order() {
        let r = TestReport::from_p_value("density", 3.5, 0.25, 100, 7, 0.001, BTreeMap::from([("t".into(), 1.0.into())]));
        let json = r.to_json().unwrap();
        let keys = ["test_name", "statistic", "p_value", "n_samples", "seed", "params", "verdict"];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(TestReport::from_json(&json).unwrap(), r);
    }

    proptest! {
        #[test]
        fn ks_invariant_under_monotone_maps(a in prop::collection::vec(-5.0f64..5.0, 1..60), b in prop::collection::vec(-5.0f64..5.0, 1..60)) {
            let base = ks_two_sample(&a, &b).unwrap();
            let f = |x: &f64| (x * 0.7).exp() * 3.0 - 2.0;
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            let mapped = ks_two_sample(&ta, &tb).unwrap();
            prop_assert_eq!(base, mapped);
        }

        #[test]
        fn pearson_invariant_under_relabeling(cells in prop::collection::vec((0u32..50, 0.5f64..20.0), 2..40), seed in any::<u64>()) {
            let obs: Vec<f64> = cells.iter().map(|c| c.0 as f64).collect();
            let exp: Vec<f64> = cells.iter().map(|c| c.1).collect();
            let mut order: Vec<usize> = (0..cells.len()).collect();
            let mut rng = stream(seed, Lane::Gaussian);
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let po: Vec<f64> = order.iter().map(|&i| obs[i]).collect();
            let pe: Vec<f64> = order.iter().map(|&i| exp[i]).collect();
            let a = pearson_statistic(&obs, &exp);
            let b = pearson_statistic(&po, &pe);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
