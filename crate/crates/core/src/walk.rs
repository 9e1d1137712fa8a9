//! The discrete bricklayer: a simple random walk on the integers that stacks
//! one block at its current site after every step.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::rng::StepStream;

/// Lattice path of a simple random walk started at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkPath {
    seed: Option<u64>,
    positions: Vec<i64>,
}

impl WalkPath {
    /// Wraps a hand-built path after checking it starts at 0 and moves by
    /// unit steps.
    pub fn from_positions(positions: Vec<i64>) -> Result<Self> {
        if positions.first() != Some(&0) {
            return Err(invalid("walk must start at site 0"));
        }
        if let Some(k) = positions.windows(2).position(|w| (w[1] - w[0]).abs() != 1) {
            return Err(invalid(format!("step {k} is not a unit step")));
        }
        Ok(Self {
            seed: None,
            positions,
        })
    }

    /// Seed the path was simulated from, `None` for hand-built paths.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n_steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// The mirror-image walk with every increment negated.
    pub fn negated(&self) -> Self {
        Self {
            seed: self.seed,
            positions: self.positions.iter().map(|p| -p).collect(),
        }
    }

    /// Running maximum of the first `k + 1` positions.
    pub fn running_max(&self, k: usize) -> i64 {
        self.positions[..=k].iter().copied().max().unwrap_or(0)
    }
}

/// Simulates `n_steps` fair ±1 steps from the `Steps` lane of `seed`.
///
/// Paths for the same seed are prefixes of one another, so
/// `simulate_walk(m, s)` is the first `m + 1` positions of
/// `simulate_walk(n, s)` whenever `m <= n`.
pub fn simulate_walk(n_steps: usize, seed: u64) -> WalkPath {
    let mut positions = Vec::with_capacity(n_steps + 1);
    positions.push(0);
    let mut site = 0;
    for step in StepStream::new(seed).take(n_steps) {
        site += step;
        positions.push(site);
    }
    WalkPath {
        seed: Some(seed),
        positions,
    }
}

/// Per-site block counts: the height of every column of the wall.
///
/// Stored densely from the lowest to the highest visited site and grown
/// geometrically on either side as the walk spreads.
#[derive(Debug, Clone, Default)]
pub struct OccupationField {
    counts: Vec<u64>,
    // site of counts[0]
    origin: i64,
    total: u64,
}

impl OccupationField {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stacks one block at `site`, returning the new height of that column.
    pub fn increment(&mut self, site: i64) -> u64 {
        let idx = self.slot(site);
        self.counts[idx] += 1;
        self.total += 1;
        self.counts[idx]
    }

    fn slot(&mut self, site: i64) -> usize {
        if self.counts.is_empty() {
            self.counts = vec![0; 16];
            self.origin = site - 8;
        }
        let len = self.counts.len() as i64;
        if site < self.origin {
            let grow = (self.origin - site).max(len) as usize;
            let mut counts = vec![0; grow + self.counts.len()];
            counts[grow..].copy_from_slice(&self.counts);
            self.counts = counts;
            self.origin -= grow as i64;
        } else if site >= self.origin + len {
            let need = (site - self.origin + 1) as usize;
            self.counts.resize(need.max(2 * self.counts.len()), 0);
        }
        (site - self.origin) as usize
    }

    /// Number of blocks at `site` (0 if never visited).
    pub fn get(&self, site: i64) -> u64 {
        let idx = site - self.origin;
        if idx < 0 {
            return 0;
        }
        self.counts.get(idx as usize).copied().unwrap_or(0)
    }

    /// Total number of blocks in the wall.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Visited sites in increasing order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(move |(i, c)| (self.origin + i as i64, *c))
    }

    pub fn to_map(&self) -> BTreeMap<i64, u64> {
        self.iter().collect()
    }

    /// Lowest and highest visited sites.
    pub fn range(&self) -> Option<(i64, i64)> {
        let mut it = self.iter();
        let first = it.next()?.0;
        let last = it.last().map_or(first, |(s, _)| s);
        Some((first, last))
    }
}

/// Block counts of `path` over steps `0..=up_to_step`, the initial block at
/// site 0 included.
pub fn occupation_field(path: &WalkPath, up_to_step: usize) -> Result<OccupationField> {
    if up_to_step > path.n_steps() {
        return Err(Error::OutOfRange {
            what: "up_to_step",
            value: up_to_step as f64,
            max: path.n_steps() as f64,
        });
    }
    let mut field = OccupationField::new();
    for &site in &path.positions[..=up_to_step] {
        field.increment(site);
    }
    Ok(field)
}

/// One block of the discrete wall: placed at `step` on `site`, landing at
/// height `height` (1 for the bottom block of a column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Brick {
    pub step: u64,
    pub site: i64,
    pub height: u64,
}

/// Blocks in the order they were laid, i.e. the string threaded through
/// consecutively numbered blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteBrickTrace {
    pub entries: Vec<Brick>,
}

pub fn discrete_brick_trace(path: &WalkPath) -> DiscreteBrickTrace {
    let mut field = OccupationField::new();
    let entries = path
        .positions
        .iter()
        .enumerate()
        .map(|(k, &site)| Brick {
            step: k as u64,
            site,
            height: field.increment(site),
        })
        .collect();
    DiscreteBrickTrace { entries }
}

/// A walk generated one step at a time, tracking its wall and running
/// maximum. Its positions agree with [`simulate_walk`] for the same seed.
#[derive(Debug, Clone)]
pub struct WalkStream {
    steps: StepStream,
    step: u64,
    site: i64,
    max_site: i64,
    field: OccupationField,
}

impl WalkStream {
    pub fn new(seed: u64) -> Self {
        let mut field = OccupationField::new();
        field.increment(0);
        Self {
            steps: StepStream::new(seed),
            step: 0,
            site: 0,
            max_site: 0,
            field,
        }
    }

    /// Takes one step and stacks a block, returning the new brick.
    #[inline]
    pub fn advance(&mut self) -> Brick {
        self.site += self.steps.next_step();
        self.step += 1;
        self.max_site = self.max_site.max(self.site);
        Brick {
            step: self.step,
            site: self.site,
            height: self.field.increment(self.site),
        }
    }

    pub fn advance_by(&mut self, steps: u64) {
        for _ in 0..steps {
            self.advance();
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn site(&self) -> i64 {
        self.site
    }

    pub fn max_site(&self) -> i64 {
        self.max_site
    }

    pub fn field(&self) -> &OccupationField {
        &self.field
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(p: &[i64]) -> WalkPath {
        WalkPath::from_positions(p.to_vec()).unwrap()
    }

    #[test]
    fn zero_step_walk() {
        assert_eq!(simulate_walk(0, 99).positions(), &[0]);
    }

    #[test]
    fn three_steps_are_unit_increments() {
        let w = simulate_walk(3, 5);
        assert_eq!(w.positions().len(), 4);
        assert!(w.positions().windows(2).all(|p| (p[1] - p[0]).abs() == 1));
    }

    #[test]
    fn long_walk_is_deterministic() {
        assert_eq!(simulate_walk(1_000_000, 42), simulate_walk(1_000_000, 42));
        assert_ne!(simulate_walk(1000, 42), simulate_walk(1000, 43));
    }

    #[test]
    fn from_positions_rejects_bad_paths() {
        assert!(WalkPath::from_positions(vec![]).is_err());
        assert!(WalkPath::from_positions(vec![1, 0]).is_err());
        assert!(WalkPath::from_positions(vec![0, 2]).is_err());
        assert!(WalkPath::from_positions(vec![0, 0]).is_err());
    }

    #[test]
    fn occupation_of_single_block() {
        let f = occupation_field(&path(&[0]), 0).unwrap();
        assert_eq!(f.to_map(), BTreeMap::from([(0, 1)]));
        assert_eq!(f.total(), 1);
    }

    #[test]
    fn occupation_by_hand() {
        let f = occupation_field(&path(&[0, 1, 0, -1]), 3).unwrap();
        assert_eq!(f.to_map(), BTreeMap::from([(-1, 1), (0, 2), (1, 1)]));
        assert_eq!(f.range(), Some((-1, 1)));
        assert_eq!(f.get(5), 0);
        assert_eq!(f.get(-100), 0);
    }

    #[test]
    fn occupation_rejects_out_of_range_step() {
        let err = occupation_field(&path(&[0, 1]), 2).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn brick_traces_by_hand() {
        let t = discrete_brick_trace(&path(&[0]));
        assert_eq!(t.entries, vec![Brick { step: 0, site: 0, height: 1 }]);
        let t = discrete_brick_trace(&path(&[0, 1, 0]));
        let triples: Vec<_> = t.entries.iter().map(|b| (b.step, b.site, b.height)).collect();
        assert_eq!(triples, vec![(0, 0, 1), (1, 1, 1), (2, 0, 2)]);
    }

    #[test]
    fn field_grows_in_both_directions() {
        let mut f = OccupationField::new();
        for s in [0, -40, 40, -1000, 1000, 3] {
            assert_eq!(f.increment(s), 1);
        }
        assert_eq!(f.increment(-1000), 2);
        assert_eq!(f.total(), 7);
        assert_eq!(f.range(), Some((-1000, 1000)));
    }

    #[test]
    fn stream_matches_batch_walk() {
        let w = simulate_walk(5000, 17);
        let mut s = WalkStream::new(17);
        for k in 1..=5000 {
            let b = s.advance();
            assert_eq!(b.site, w.positions()[k]);
        }
        let f = occupation_field(&w, 5000).unwrap();
        assert_eq!(f.to_map(), s.field().to_map());
        assert_eq!(s.max_site(), w.running_max(5000));
    }

    /// Empirical moments of S(n)/√n over many walks match the unit
    /// Gaussian.
    #[test]
    fn endpoint_moments() {
        let walks = 10_000u64;
        let n = 10_000usize;
        let vals: Vec<f64> = (0..walks)
            .map(|i| {
                let s: i64 = StepStream::new(crate::rng::derive_seed(2024, i)).take(n).sum();
                s as f64 / (n as f64).sqrt()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / walks as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (walks - 1) as f64;
        assert!(mean.abs() < 4.0 / (walks as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    proptest! {
        #[test]
        fn field_invariants(seed in any::<u64>(), n in 0usize..400) {
            let w = simulate_walk(n, seed);
            let full = occupation_field(&w, n).unwrap();
            prop_assert_eq!(full.total(), n as u64 + 1);
            // visited sites form an interval containing 0
            let (lo, hi) = full.range().unwrap();
            prop_assert!(lo <= 0 && 0 <= hi);
            for j in lo..=hi {
                prop_assert!(full.get(j) >= 1);
            }
            // successive fields differ by one block at the current site
            for k in 1..=n {
                let prev = occupation_field(&w, k - 1).unwrap().to_map();
                let mut cur = occupation_field(&w, k).unwrap().to_map();
                let site = w.positions()[k];
                *cur.get_mut(&site).unwrap() -= 1;
                cur.retain(|_, c| *c > 0);
                prop_assert_eq!(prev, cur);
            }
        }

        #[test]
        fn negation_mirrors_field(seed in any::<u64>(), n in 0usize..500) {
            let w = simulate_walk(n, seed);
            let f = occupation_field(&w, n).unwrap();
            let g = occupation_field(&w.negated(), n).unwrap();
            for (site, count) in f.iter() {
                prop_assert_eq!(g.get(-site), count);
            }
            prop_assert_eq!(f.total(), g.total());
        }

        #[test]
        fn columns_fill_without_gaps(seed in any::<u64>(), n in 0usize..500) {
            let trace = discrete_brick_trace(&simulate_walk(n, seed));
            prop_assert_eq!(trace.entries.len(), n + 1);
            let mut seen = BTreeMap::new();
            for b in &trace.entries {
                let h = seen.entry(b.site).or_insert(0u64);
                *h += 1;
                prop_assert_eq!(b.height, *h);
            }
        }
    }
}
