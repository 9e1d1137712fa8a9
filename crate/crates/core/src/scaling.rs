//! Diffusive rescaling of walks and two estimators of Brownian local time.
//!
//! The band estimator evaluates the occupation-density quotient
//! `(2ε)⁻¹ · Leb{u ≤ t : |X(u) − y| < ε}` exactly on a piecewise-linear path
//! by clipping every segment against the band in closed form. The occupation
//! estimator reads the walk's block count at the nearest lattice site and
//! rescales it by `n^(-1/2)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sum::Compensated;
use crate::walk::WalkPath;

/// Continuous piecewise-linear path through knots `(time, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPath {
    scale: Option<u64>,
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Default band half-width `n^(-1/4)`.
pub fn default_eps(n: u64) -> f64 {
    (n as f64).powf(-0.25)
}

/// `n^(-1/2) · S(⌈n·u⌉)` sampled at the knots `u = k/n`, linearly
/// interpolated in between.
pub fn donsker_rescale(path: &WalkPath, n: u64) -> Result<ScaledPath> {
    if n == 0 {
        return Err(Error::InvalidScale("n must be at least 1".into()));
    }
    if path.n_steps() == 0 {
        return Err(invalid("rescaling needs at least one step"));
    }
    let nf = n as f64;
    let root = nf.sqrt();
    let times = (0..=path.n_steps()).map(|k| k as f64 / nf).collect();
    let values = path.positions().iter().map(|&p| p as f64 / root).collect();
    Ok(ScaledPath {
        scale: Some(n),
        times,
        values,
    })
}

impl ScaledPath {
    /// General path through the given knots. Times must start at 0 and
    /// increase strictly; all coordinates must be finite.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Self> {
        let Some(first) = knots.first() else {
            return Err(invalid("path needs at least one knot"));
        };
        if first.0 != 0.0 {
            return Err(invalid("path must start at time 0"));
        }
        if knots.iter().any(|(u, x)| !u.is_finite() || !x.is_finite()) {
            return Err(invalid("knots must be finite"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("knot times must increase strictly"));
        }
        Ok(Self {
            scale: None,
            times: knots.iter().map(|k| k.0).collect(),
            values: knots.iter().map(|k| k.1).collect(),
        })
    }

    /// Steps per unit time for rescaled walks.
    pub fn scale(&self) -> Option<u64> {
        self.scale
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn knots(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn segment_count(&self) -> usize {
        self.times.len() - 1
    }

    /// The path with every value multiplied by `c`.
    pub fn scale_levels(&self, c: f64) -> Self {
        Self {
            scale: self.scale,
            times: self.times.clone(),
            values: self.values.iter().map(|x| c * x).collect(),
        }
    }

    pub fn negated(&self) -> Self {
        self.scale_levels(-1.0)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                max: self.horizon(),
            });
        }
        Ok(())
    }

    /// Path value at time `u` by linear interpolation.
    pub fn value_at(&self, u: f64) -> Result<f64> {
        self.check_time(u)?;
        let k = self.times.partition_point(|&s| s <= u);
        if k == self.times.len() {
            return Ok(*self.values.last().expect("non-empty"));
        }
        let (u0, u1) = (self.times[k - 1], self.times[k]);
        let (x0, x1) = (self.values[k - 1], self.values[k]);
        let w = (u - u0) / (u1 - u0);
        Ok(x0 + w * (x1 - x0))
    }

    /// Segments `(duration, start value, end value)` of the path restricted
    /// to `[0, t]`; the last one is cut at `t`.
    pub(crate) fn segments_until(&self, t: f64) -> impl Iterator<Item = Segment> + '_ {
        let last = self.times.partition_point(|&s| s < t);
        (1..=last.min(self.times.len() - 1)).map(move |k| {
            let (u0, u1) = (self.times[k - 1], self.times[k]);
            let (x0, x1) = (self.values[k - 1], self.values[k]);
            if u1 <= t {
                Segment { duration: u1 - u0, from: x0, to: x1 }
            } else {
                let w = (t - u0) / (u1 - u0);
                Segment { duration: t - u0, from: x0, to: x0 + w * (x1 - x0) }
            }
        })
    }

    /// Smallest and largest values on `[0, t]`.
    pub(crate) fn range_until(&self, t: f64) -> (f64, f64) {
        let x0 = self.values[0];
        self.segments_until(t)
            .fold((x0, x0), |(lo, hi), s| (lo.min(s.to), hi.max(s.to)))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub duration: f64,
    pub from: f64,
    pub to: f64,
}

impl Segment {
    /// Time this segment spends strictly inside `(y − eps, y + eps)`.
    #[inline]
    pub fn time_in_band(&self, y: f64, eps: f64) -> f64 {
        if self.from == self.to {
            return if (self.from - y).abs() < eps { self.duration } else { 0.0 };
        }
        let (lo, hi) = if self.from < self.to { (self.from, self.to) } else { (self.to, self.from) };
        let overlap = hi.min(y + eps) - lo.max(y - eps);
        if overlap <= 0.0 {
            0.0
        } else {
            self.duration * overlap / (hi - lo)
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("band half-width must be positive, got {eps}")));
    }
    Ok(())
}

/// `(2ε)⁻¹ · Leb{u ∈ [0, t] : |X(u) − y| < ε}`, exact per segment.
pub fn band_local_time(path: &ScaledPath, y: f64, t: f64, eps: f64) -> Result<f64> {
    path.check_time(t)?;
    check_eps(eps)?;
    let mut acc = Compensated::default();
    for seg in path.segments_until(t) {
        acc.add(seg.time_in_band(y, eps));
    }
    Ok(acc.value() / (2.0 * eps))
}

/// Converts a continuous time to a step index `⌈n·t⌉`, absorbing rounding
/// noise so that `t = k/n` maps back to `k`.
pub fn step_at_time(n: u64, t: f64) -> u64 {
    let x = n as f64 * t;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Nearest lattice site to level `y` at scale `n`; halves round toward 0.
pub fn snap_level(n: u64, y: f64) -> i64 {
    let z = y * (n as f64).sqrt();
    if z.abs().fract() == 0.5 {
        z.trunc() as i64
    } else {
        z.round() as i64
    }
}

fn check_walk_time(path: &WalkPath, n: u64, t: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidScale("n must be at least 1".into()));
    }
    let horizon = path.n_steps() as f64 / n as f64;
    if !(t >= 0.0) {
        return Err(Error::OutOfRange { what: "t", value: t, max: horizon });
    }
    let k = step_at_time(n, t);
    if k > path.n_steps() as u64 {
        return Err(Error::OutOfRange { what: "t", value: t, max: horizon });
    }
    Ok(k as usize)
}

/// `n^(-1/2) · L(round(y·√n), ⌈n·t⌉)`.
pub fn occupation_local_time(path: &WalkPath, n: u64, y: f64, t: f64) -> Result<f64> {
    let k = check_walk_time(path, n, t)?;
    let site = snap_level(n, y);
    let count = path.positions()[..=k].iter().filter(|&&p| p == site).count();
    Ok(count as f64 / (n as f64).sqrt())
}

/// Which estimator produced a local-time value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorTag {
    Band,
    Occupation,
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorTag::Band => "band",
            EstimatorTag::Occupation => "occupation",
        })
    }
}

impl FromStr for EstimatorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "band" => Ok(EstimatorTag::Band),
            "occupation" => Ok(EstimatorTag::Occupation),
            _ => Err(Error::Unknown { kind: "estimator", name: s.into() }),
        }
    }
}

/// Estimator choice with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Band { eps: f64 },
    Occupation,
}

impl Estimator {
    pub fn tag(&self) -> EstimatorTag {
        match self {
            Estimator::Band { .. } => EstimatorTag::Band,
            Estimator::Occupation => EstimatorTag::Occupation,
        }
    }
}

/// Estimated local times `y ↦ ℓ(y, t)` on a grid of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeProfile {
    pub t: f64,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub estimator: EstimatorTag,
    pub eps: Option<f64>,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(invalid("level grid is empty"));
    }
    if levels.iter().any(|y| !y.is_finite()) || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("level grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Piece of the profile that switches on past `at`:
/// contributes `slope · (y − at) + jump` for levels beyond it.
#[derive(Debug, Clone, Copy)]
struct Breakpoint {
    at: f64,
    slope: f64,
    jump: f64,
}

/// Band-estimator profile over a sorted grid.
///
/// The band time of one linear segment, as a function of the level, is the
/// overlap length of two intervals: a trapezoid that is a signed sum of four
/// ramps `(y − b)₊`. Flat segments contribute a box instead. Summing all
/// breakpoints in level order and sweeping once over the grid gives the
/// whole profile in `O((k + m) log(k + m))` for `k` segments and `m` levels.
pub fn band_profile(path: &ScaledPath, t: f64, levels: &[f64], eps: f64) -> Result<LocalTimeProfile> {
    path.check_time(t)?;
    check_eps(eps)?;
    check_levels(levels)?;

    // breakpoints active for y > at, and for y >= at
    let mut open = Vec::new();
    let mut closed = Vec::new();
    for seg in path.segments_until(t) {
        if seg.duration == 0.0 {
            continue;
        }
        if seg.from == seg.to {
            let h = seg.duration;
            open.push(Breakpoint { at: seg.from - eps, slope: 0.0, jump: h });
            closed.push(Breakpoint { at: seg.from + eps, slope: 0.0, jump: -h });
            continue;
        }
        let (lo, hi) = if seg.from < seg.to { (seg.from, seg.to) } else { (seg.to, seg.from) };
        let c = seg.duration / (hi - lo);
        for (at, slope) in [(lo - eps, c), (hi - eps, -c), (lo + eps, -c), (hi + eps, c)] {
            open.push(Breakpoint { at, slope, jump: 0.0 });
        }
    }
    let by_level = |a: &Breakpoint, b: &Breakpoint| a.at.total_cmp(&b.at);
    open.sort_unstable_by(by_level);
    closed.sort_unstable_by(by_level);

    let (lo, hi) = path.range_until(t);
    let mut slope = Compensated::default();
    let mut offset = Compensated::default();
    let (mut i, mut j) = (0, 0);
    let norm = 1.0 / (2.0 * eps);
    let values = levels
        .iter()
        .map(|&y| {
            while i < open.len() && open[i].at < y {
                slope.add(open[i].slope);
                offset.add(open[i].jump - open[i].slope * open[i].at);
                i += 1;
            }
            while j < closed.len() && closed[j].at <= y {
                offset.add(closed[j].jump);
                j += 1;
            }
            if t == 0.0 || y <= lo - eps || y >= hi + eps {
                0.0
            } else {
                ((slope.value() * y + offset.value()) * norm).max(0.0)
            }
        })
        .collect();
    Ok(LocalTimeProfile {
        t,
        levels: levels.to_vec(),
        values,
        estimator: EstimatorTag::Band,
        eps: Some(eps),
    })
}

/// Occupation-estimator profile: one pass to build the wall, one lookup
/// per level.
pub fn occupation_profile(path: &WalkPath, n: u64, t: f64, levels: &[f64]) -> Result<LocalTimeProfile> {
    let k = check_walk_time(path, n, t)?;
    check_levels(levels)?;
    let field = crate::walk::occupation_field(path, k)?;
    let root = (n as f64).sqrt();
    let values = levels
        .iter()
        .map(|&y| field.get(snap_level(n, y)) as f64 / root)
        .collect();
    Ok(LocalTimeProfile {
        t,
        levels: levels.to_vec(),
        values,
        estimator: EstimatorTag::Occupation,
        eps: None,
    })
}

/// Profile of the walk's local times at time `t` under either estimator.
pub fn local_time_profile(
    path: &WalkPath,
    n: u64,
    t: f64,
    levels: &[f64],
    estimator: Estimator,
) -> Result<LocalTimeProfile> {
    match estimator {
        Estimator::Band { eps } => band_profile(&donsker_rescale(path, n)?, t, levels, eps),
        Estimator::Occupation => occupation_profile(path, n, t, levels),
    }
}

/// `m` evenly spaced levels from `lo` to `hi` inclusive.
pub fn level_grid(lo: f64, hi: f64, m: usize) -> Result<Vec<f64>> {
    if m == 0 || !(lo.is_finite() && hi.is_finite()) || (m > 1 && hi <= lo) {
        return Err(invalid("level grid needs m >= 1 and lo < hi"));
    }
    if m == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (m - 1) as f64;
    Ok((0..m).map(|i| if i + 1 == m { hi } else { lo + step * i as f64 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::simulate_walk;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn walk(p: &[i64]) -> WalkPath {
        WalkPath::from_positions(p.to_vec()).unwrap()
    }

    #[test]
    fn identity_scale_knots() {
        let s = donsker_rescale(&walk(&[0, 1]), 1).unwrap();
        assert_eq!(s.knots().collect::<Vec<_>>(), vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn quarter_scale_knots() {
        let s = donsker_rescale(&walk(&[0, 1, 0, -1]), 4).unwrap();
        assert_eq!(
            s.knots().collect::<Vec<_>>(),
            vec![(0.0, 0.0), (0.25, 0.5), (0.5, 0.0), (0.75, -0.5)]
        );
        assert_eq!(s.horizon(), 0.75);
    }

    #[test]
    fn midpoint_interpolates() {
        let s = donsker_rescale(&walk(&[0, 1, 0, -1]), 4).unwrap();
        assert_abs_diff_eq!(s.value_at(0.125).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.value_at(0.625).unwrap(), -0.25, epsilon = 1e-15);
        assert_eq!(s.value_at(0.75).unwrap(), -0.5);
        assert!(s.value_at(0.8).is_err());
    }

    #[test]
    fn rescale_errors() {
        assert!(matches!(donsker_rescale(&walk(&[0, 1]), 0), Err(Error::InvalidScale(_))));
        assert!(donsker_rescale(&walk(&[0]), 1).is_err());
    }

    fn flat_zero() -> ScaledPath {
        ScaledPath::from_knots(&[(0.0, 0.0), (1.0, 0.0)]).unwrap()
    }

    #[test]
    fn band_on_constant_path() {
        assert_eq!(band_local_time(&flat_zero(), 0.0, 1.0, 0.5).unwrap(), 1.0);
        assert_eq!(band_local_time(&flat_zero(), 10.0, 1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn band_on_single_rising_segment() {
        let p = ScaledPath::from_knots(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(band_local_time(&p, 0.5, 1.0, 0.25).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn band_errors() {
        assert!(band_local_time(&flat_zero(), 0.0, 1.5, 0.5).is_err());
        assert!(band_local_time(&flat_zero(), 0.0, 1.0, 0.0).is_err());
        assert!(band_local_time(&flat_zero(), 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn occupation_examples() {
        let w = walk(&[0, 1, 0, -1]);
        assert_eq!(occupation_local_time(&w, 4, 0.0, 0.0).unwrap(), 0.5);
        // ⌈4·0.75⌉ = 3 steps: site 0 visited at k = 0 and 2
        assert_eq!(occupation_local_time(&w, 4, 0.0, 0.75).unwrap(), 1.0);
        assert_eq!(occupation_local_time(&w, 4, 9.0, 0.75).unwrap(), 0.0);
        assert!(occupation_local_time(&w, 4, 0.0, 1.0).is_err());
        assert!(occupation_local_time(&w, 0, 0.0, 0.0).is_err());
        let w = walk(&[0, 1, 0, -1, 0]);
        assert_eq!(occupation_local_time(&w, 4, 0.0, 1.0).unwrap(), 1.5);
    }

    #[test]
    fn snapping_ties_go_toward_zero() {
        assert_eq!(snap_level(4, 0.25), 0);
        assert_eq!(snap_level(4, -0.25), 0);
        assert_eq!(snap_level(4, 0.75), 1);
        assert_eq!(snap_level(4, -0.75), -1);
        assert_eq!(snap_level(4, 0.3), 1);
        assert_eq!(snap_level(100, -0.123), -1);
    }

    #[test]
    fn step_index_absorbs_rounding() {
        assert_eq!(step_at_time(10_000, 0.29), 2900);
        assert_eq!(step_at_time(3, 1.0 / 3.0), 1);
        assert_eq!(step_at_time(10, 0.123), 2);
        assert_eq!(step_at_time(10, 0.0), 0);
    }

    #[test]
    fn profile_at_time_zero() {
        let w = simulate_walk(100, 1);
        let levels = level_grid(-1.0, 1.0, 21).unwrap();
        let band = local_time_profile(&w, 100, 0.0, &levels, Estimator::Band { eps: 0.3 }).unwrap();
        assert!(band.values.iter().all(|v| *v == 0.0));
        let occ = local_time_profile(&w, 100, 0.0, &levels, Estimator::Occupation).unwrap();
        for (y, v) in occ.levels.iter().zip(&occ.values) {
            let expect = if y.abs() < 0.05 { 0.1 } else { 0.0 };
            assert_eq!(*v, expect, "y = {y}");
        }
    }

    #[test]
    fn profile_rejects_bad_grids() {
        let p = flat_zero();
        assert!(band_profile(&p, 1.0, &[], 0.1).is_err());
        assert!(band_profile(&p, 1.0, &[0.0, 0.0], 0.1).is_err());
        assert!(band_profile(&p, 1.0, &[1.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn flat_path_profile_respects_open_band() {
        let p = flat_zero();
        let prof = band_profile(&p, 1.0, &[-0.5, -0.49, 0.0, 0.49, 0.5], 0.5).unwrap();
        assert_eq!(prof.values, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn sweep_matches_direct_clipping() {
        let w = simulate_walk(20_000, 8);
        let n = 10_000;
        let s = donsker_rescale(&w, n).unwrap();
        let levels = level_grid(-2.0, 2.0, 401).unwrap();
        for t in [0.0, 0.3337, 1.0, 2.0] {
            let prof = band_profile(&s, t, &levels, 0.1).unwrap();
            for (y, v) in levels.iter().zip(&prof.values) {
                let direct = band_local_time(&s, *y, t, 0.1).unwrap();
                assert_abs_diff_eq!(*v, direct, epsilon = 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn fubini_by_trapezoid(seed in any::<u64>(), t in 0.25f64..1.0, eps in 0.05f64..0.15) {
            let n = 10_000;
            let s = donsker_rescale(&simulate_walk(10_000, seed), n).unwrap();
            let (lo, hi) = s.range_until(t);
            let h = eps / 8.0;
            let m = ((hi - lo + 2.0 * eps) / h).ceil() as usize + 3;
            let levels = level_grid(lo - eps - h, hi + eps + h, m).unwrap();
            let prof = band_profile(&s, t, &levels, eps).unwrap();
            let area: f64 = prof.values.windows(2).zip(levels.windows(2))
                .map(|(v, y)| 0.5 * (v[0] + v[1]) * (y[1] - y[0])).sum();
            prop_assert!((area - t).abs() <= 1e-3 * t, "area {} t {}", area, t);
        }

        #[test]
        fn monotone_in_time(seed in any::<u64>(), y in -1.0f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let s = donsker_rescale(&simulate_walk(500, seed), 500).unwrap();
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            let l1 = band_local_time(&s, y, t1, 0.1).unwrap();
            let l2 = band_local_time(&s, y, t2, 0.1).unwrap();
            prop_assert!(l1 <= l2 + 1e-12);
        }

        #[test]
        fn negation_reflects_profile(seed in any::<u64>()) {
            let s = donsker_rescale(&simulate_walk(300, seed), 100).unwrap();
            let levels = level_grid(-2.0, 2.0, 81).unwrap();
            let up = band_profile(&s, 3.0, &levels, 0.2).unwrap();
            let down = band_profile(&s.negated(), 3.0, &levels, 0.2).unwrap();
            for (i, v) in up.values.iter().enumerate() {
                prop_assert!((v - down.values[levels.len() - 1 - i]).abs() < 1e-12);
            }
        }

        #[test]
        fn profile_is_nonnegative_and_vanishes_outside(seed in any::<u64>()) {
            let s = donsker_rescale(&simulate_walk(300, seed), 100).unwrap();
            let levels = level_grid(-4.0, 4.0, 161).unwrap();
            let prof = band_profile(&s, 2.5, &levels, 0.15).unwrap();
            let (lo, hi) = s.range_until(2.5);
            for (y, v) in levels.iter().zip(&prof.values) {
                prop_assert!(*v >= 0.0);
                if *y <= lo - 0.15 || *y >= hi + 0.15 {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
    }
}
