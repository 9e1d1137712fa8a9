//! The bricklayer curve `K(t) = (B(t), ℓ(B(t), t))` built from a rescaled
//! walk, plus the wall-area law, the bottom-to-top fill order of columns,
//! and a desk-scale space-filling check.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scaling::{EstimatorTag, Estimator, ScaledPath, Segment};
use crate::sum::Compensated;
use crate::walk::{OccupationField, WalkPath, WalkStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub x: f64,
    pub h: f64,
}

/// Time-ordered samples `(t, x, h)` of the bricklayer curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BricklayerTrace {
    pub points: Vec<CurvePoint>,
    pub n: u64,
    pub estimator: EstimatorTag,
}

/// Samples the curve at steps `0, stride, 2·stride, …` of `path`.
///
/// With the occupation estimator the height is the running block count at
/// the current site over `√n`, updated in O(1) per step. With the band
/// estimator each lattice level keeps its accumulated band time, and every
/// segment updates only the `O(ε√n)` levels within `ε` of it.
pub fn build_trace(path: &WalkPath, n: u64, estimator: Estimator, stride: usize) -> Result<BricklayerTrace> {
    if n == 0 {
        return Err(Error::InvalidScale("n must be at least 1".into()));
    }
    if stride == 0 {
        return Err(invalid("stride must be at least 1"));
    }
    let nf = n as f64;
    let root = nf.sqrt();
    let positions = path.positions();
    let kept = positions.len().div_ceil(stride);
    let mut points = Vec::with_capacity(kept);
    match estimator {
        Estimator::Occupation => {
            let mut field = OccupationField::new();
            for (k, &site) in positions.iter().enumerate() {
                let count = field.increment(site);
                if k % stride == 0 {
                    points.push(CurvePoint {
                        t: k as f64 / nf,
                        x: site as f64 / root,
                        h: count as f64 / root,
                    });
                }
            }
        }
        Estimator::Band { eps } => {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(invalid(format!("band half-width must be positive, got {eps}")));
            }
            let reach = (eps * root).ceil() as i64 + 1;
            let lo = positions.iter().min().copied().unwrap_or(0) - reach;
            let hi = positions.iter().max().copied().unwrap_or(0) + reach;
            let mut acc = vec![Compensated::default(); (hi - lo + 1) as usize];
            let norm = 1.0 / (2.0 * eps);
            for (k, &site) in positions.iter().enumerate() {
                if k > 0 {
                    let seg = Segment {
                        duration: k as f64 / nf - (k - 1) as f64 / nf,
                        from: positions[k - 1] as f64 / root,
                        to: site as f64 / root,
                    };
                    let (a, b) = (positions[k - 1].min(site), positions[k - 1].max(site));
                    for j in (a - reach).max(lo)..=(b + reach).min(hi) {
                        let dt = seg.time_in_band(j as f64 / root, eps);
                        if dt > 0.0 {
                            acc[(j - lo) as usize].add(dt);
                        }
                    }
                }
                if k % stride == 0 {
                    points.push(CurvePoint {
                        t: k as f64 / nf,
                        x: site as f64 / root,
                        h: acc[(site - lo) as usize].value() * norm,
                    });
                }
            }
        }
    }
    Ok(BricklayerTrace {
        points,
        n,
        estimator: estimator.tag(),
    })
}

fn check_factors(c: f64, d: f64) -> Result<()> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidScale(format!("level factor c must be nonzero, got {c}")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidScale(format!("height factor d must be positive, got {d}")));
    }
    Ok(())
}

/// Maps every point `(t, x, h)` to `(t, c·x, d·h)`.
pub fn scale_trace(trace: &BricklayerTrace, c: f64, d: f64) -> Result<BricklayerTrace> {
    check_factors(c, d)?;
    Ok(BricklayerTrace {
        points: trace
            .points
            .iter()
            // + 0.0 turns the -0 of a mirrored origin into 0
            .map(|p| CurvePoint { t: p.t, x: c * p.x + 0.0, h: d * p.h })
            .collect(),
        n: trace.n,
        estimator: trace.estimator,
    })
}

/// Area under the level profile of one segment's band time, for the wall
/// stretched by `|c|` sideways and `d` upwards.
///
/// The profile of a sloped segment is the overlap of its level range
/// (width `w₁`) with a sliding band (width `w₂ = 2ε`): a trapezoid with base
/// `w₁ + w₂`, top `|w₁ − w₂|` and height `min(w₁, w₂)`, scaled by
/// `duration / w₁`. A flat segment gives a box of width `w₂` instead.
fn segment_wall_area(seg: &Segment, eps: f64, c: f64, d: f64) -> f64 {
    let w2 = 2.0 * eps;
    let stretch = c.abs();
    if seg.from == seg.to {
        return (stretch * w2) * (d * seg.duration / w2);
    }
    let w1 = (seg.to - seg.from).abs();
    let base = stretch * (w1 + w2);
    let top = stretch * (w1 - w2).abs();
    let height = d * seg.duration * w1.min(w2) / (w1 * w2);
    0.5 * (base + top) * height
}

fn wall_area_impl(path: &ScaledPath, t: f64, eps: f64, c: f64, d: f64) -> Result<f64> {
    if !(0.0..=path.horizon()).contains(&t) {
        return Err(Error::OutOfRange { what: "t", value: t, max: path.horizon() });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("band half-width must be positive, got {eps}")));
    }
    let mut acc = Compensated::default();
    for seg in path.segments_until(t) {
        acc.add(segment_wall_area(&seg, eps, c, d));
    }
    Ok(acc.value())
}

/// `∫ ℓ̂(y, t) dy` for the band estimator, accumulated in closed form one
/// segment at a time. Equals `t` up to rounding.
pub fn wall_area(path: &ScaledPath, t: f64, eps: f64) -> Result<f64> {
    wall_area_impl(path, t, eps, 1.0, 1.0)
}

/// Wall area of the curve `(c·B, d·ℓ)`: `∫ d·ℓ̂(z/c, t) dz = |c|·d·t`.
pub fn wall_area_scaled(path: &ScaledPath, t: f64, eps: f64, c: f64, d: f64) -> Result<f64> {
    check_factors(c, d)?;
    wall_area_impl(path, t, eps, c, d)
}

/// All index pairs `i < j` on a common column (`x_i == x_j`) where the
/// earlier point sits higher (`h_i > h_j`).
pub fn fill_order_check(trace: &BricklayerTrace) -> Vec<(usize, usize)> {
    let mut columns: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, p) in trace.points.iter().enumerate() {
        // +0.0 normalises -0.0 so both land in the same column
        columns.entry((p.x + 0.0).to_bits()).or_default().push(i);
    }
    let mut violations = Vec::new();
    for idx in columns.values() {
        let h = |i: usize| trace.points[i].h;
        if idx.windows(2).all(|w| h(w[0]) <= h(w[1])) {
            continue;
        }
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                if h(i) > h(j) {
                    violations.push((i, j));
                }
            }
        }
    }
    violations.sort_unstable();
    violations
}

/// Largest height change between consecutive trace points.
pub fn max_height_jump(trace: &BricklayerTrace) -> f64 {
    trace
        .points
        .windows(2)
        .map(|w| (w[1].h - w[0].h).abs())
        .fold(0.0, f64::max)
}

/// Rectangle `[x_lo, x_hi] × [0, h_hi]` in the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_lo: f64,
    pub x_hi: f64,
    pub h_hi: f64,
}

impl Window {
    pub fn new(x_lo: f64, x_hi: f64, h_hi: f64) -> Result<Self> {
        if !(x_lo.is_finite() && x_hi.is_finite() && h_hi.is_finite()) || x_lo >= x_hi {
            return Err(Error::DegenerateWindow(format!("need finite x_lo < x_hi, got [{x_lo}, {x_hi}]")));
        }
        if h_hi <= 0.0 {
            return Err(Error::DegenerateWindow(format!(
                "window must reach into the upper half plane, got h_hi = {h_hi}"
            )));
        }
        Ok(Self { x_lo, x_hi, h_hi })
    }
}

/// Outcome of a coverage run on a grid of `δ × δ` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub window: Window,
    pub cell_size: f64,
    pub columns: usize,
    pub rows: usize,
    pub covered_count: usize,
    pub total_count: usize,
    /// Row-major (`row * columns + column`) first time each cell was hit.
    pub first_cover_time: Vec<Option<f64>>,
    pub steps_taken: u64,
    pub budget_exhausted: bool,
}

impl CoverageReport {
    pub fn fully_covered(&self) -> bool {
        self.covered_count == self.total_count
    }

    /// Time at which the last cell was covered.
    pub fn cover_time(&self) -> Option<f64> {
        if !self.fully_covered() {
            return None;
        }
        self.first_cover_time.iter().flatten().copied().reduce(f64::max)
    }
}

fn cell_count(span: f64, delta: f64) -> usize {
    ((span / delta) - 1e-9).ceil().max(1.0) as usize
}

// floor with slack for values that should sit exactly on a cell edge
fn cell_index(offset: f64, delta: f64, cells: usize) -> usize {
    ((offset / delta + 1e-9).floor() as usize).min(cells - 1)
}

const MAX_CELLS: usize = 50_000_000;

/// Grows the walk from `seed` one step at a time, marking every cell a
/// placed block touches, until all cells of `window` are covered or
/// `step_budget` steps have been taken.
///
/// The block laid at height `m` on site `j` is the vertical segment
/// `{j/√n} × [(m − 1)/√n, m/√n]`; the trace point `(t, j/√n, m/√n)` is its
/// top. The initial block therefore covers the cell holding `(0, 0)`.
pub fn coverage_check(seed: u64, window: Window, delta: f64, step_budget: u64, n: u64) -> Result<CoverageReport> {
    let window = Window::new(window.x_lo, window.x_hi, window.h_hi)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("cell size must be positive, got {delta}")));
    }
    if step_budget == 0 {
        return Err(invalid("step budget must be at least 1"));
    }
    if n == 0 {
        return Err(Error::InvalidScale("n must be at least 1".into()));
    }
    let columns = cell_count(window.x_hi - window.x_lo, delta);
    let rows = cell_count(window.h_hi, delta);
    if columns.saturating_mul(rows) > MAX_CELLS {
        return Err(invalid(format!("{columns} x {rows} cells is too fine a grid")));
    }
    let mut grid = CoverGrid {
        window,
        delta,
        columns,
        rows,
        root: (n as f64).sqrt(),
        n: n as f64,
        first: vec![None; columns * rows],
        covered: 0,
    };
    let mut walk = WalkStream::new(seed);
    grid.mark(0, 0, 1);
    while grid.covered < grid.first.len() && walk.step() < step_budget {
        let b = walk.advance();
        grid.mark(b.step, b.site, b.height);
    }
    Ok(CoverageReport {
        window,
        cell_size: delta,
        columns,
        rows,
        covered_count: grid.covered,
        total_count: grid.first.len(),
        budget_exhausted: grid.covered < grid.first.len(),
        first_cover_time: grid.first,
        steps_taken: walk.step(),
    })
}

struct CoverGrid {
    window: Window,
    delta: f64,
    columns: usize,
    rows: usize,
    root: f64,
    n: f64,
    first: Vec<Option<f64>>,
    covered: usize,
}

impl CoverGrid {
    #[inline]
    fn mark(&mut self, step: u64, site: i64, height: u64) {
        let x = site as f64 / self.root;
        let bottom = (height - 1) as f64 / self.root;
        if x < self.window.x_lo || x > self.window.x_hi || bottom > self.window.h_hi {
            return;
        }
        let top = (height as f64 / self.root).min(self.window.h_hi);
        let col = cell_index(x - self.window.x_lo, self.delta, self.columns);
        let t = step as f64 / self.n;
        for row in cell_index(bottom, self.delta, self.rows)..=cell_index(top, self.delta, self.rows) {
            let cell = &mut self.first[row * self.columns + col];
            if cell.is_none() {
                *cell = Some(t);
                self.covered += 1;
            }
        }
    }
}
