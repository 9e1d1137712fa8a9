//! Exact fixed-time law of the bricklayer `K(t) = (B(t), ℓ(B(t), t))` and
//! Monte-Carlo samplers for the chain of distributional identities that
//! produces it.
//!
//! The joint density of `(B(t), ℓ(B(t), t))` on `ℝ × [0, ∞)` is
//!
//! ```text
//! f_t(y, s) = (|y| + s) / √(2π t³) · exp(−(|y| + s)² / 2t)
//! ```
//!
//! obtained by differentiating the reflection tail `P{B ∈ dx, S ≥ s}` in
//! `s`, mapping `(B, S) ↦ (S − B, S)` and attaching an independent fair
//! sign. On the boundary `s = 0` the formula is kept as is: it equals
//! `|y|/√(2π t³)·exp(−y²/2t)`, which is 0 only at the corner `y = 0`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::quadrature;
use crate::rng::{derive_seed, sign_stream, stream, Lane};
use crate::scaling::step_at_time;
use crate::walk::WalkStream;

/// Quadrature truncation: mass beyond `|y| + s > 10√t` is below 1e-21.
pub const TRUNCATION: f64 = 10.0;
/// Absolute tolerance of all oracle quadratures.
pub const QUAD_TOL: f64 = 1e-10;

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

fn check_height(s: f64) -> Result<()> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("height must be nonnegative, got {s}")));
    }
    Ok(())
}

#[inline]
fn density_unchecked(y: f64, s: f64, t: f64) -> f64 {
    let u = y.abs() + s;
    u / (2.0 * PI * t * t * t).sqrt() * (-u * u / (2.0 * t)).exp()
}

/// Joint density of `(B(t), ℓ(B(t), t))` at `(y, s)`.
pub fn joint_density(y: f64, s: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    check_height(s)?;
    Ok(density_unchecked(y, s, t))
}

/// Density of `B(t)`: centred Gaussian with variance `t`.
pub fn marginal_level(y: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((-y * y / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

/// Density of `ℓ(B(t), t)`: half-normal with scale `√t`. At `s = 0` this is
/// the one-sided limit `√(2/(πt))`.
pub fn marginal_height(s: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    check_height(s)?;
    Ok((2.0 / (PI * t)).sqrt() * (-s * s / (2.0 * t)).exp())
}

/// `E[ℓ(B(t), t)] = √(2t/π)`.
pub fn mean_height(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((2.0 * t / PI).sqrt())
}

/// Density in `x` of `P{B(t) ∈ dx, S(t) ≥ s}` for `x < s`, where `S` is
/// the running maximum.
pub fn reflection_tail(x: f64, s: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if !(s > 0.0) {
        return Err(Error::Domain(format!("level s must be positive, got {s}")));
    }
    if !(x < s) {
        return Err(Error::Domain(format!("need x < s, got x = {x}, s = {s}")));
    }
    let z = 2.0 * s - x;
    Ok((-z * z / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

/// The law of `K(t)` at a fixed `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityModel {
    t: f64,
}

impl DensityModel {
    pub fn new(t: f64) -> Result<Self> {
        check_time(t)?;
        Ok(Self { t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Joint density, zero for `s < 0`.
    pub fn density(&self, y: f64, s: f64) -> f64 {
        if s < 0.0 {
            0.0
        } else {
            density_unchecked(y, s, self.t)
        }
    }

    fn gaussian(&self) -> Normal {
        Normal::new(0.0, self.t.sqrt()).expect("positive variance")
    }

    /// `p`-quantile of the level marginal.
    pub fn level_quantile(&self, p: f64) -> f64 {
        self.gaussian().inverse_cdf(p)
    }

    /// `p`-quantile of the height marginal.
    pub fn height_quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        self.gaussian().inverse_cdf(0.5 * (1.0 + p))
    }

    /// Probability of the rectangle `[y0, y1] × [s0, s1]` by adaptive
    /// quadrature. Infinite edges are cut at the truncation radius and the
    /// level range is split at 0 where `|y|` has its kink.
    pub fn rect_probability(&self, y0: f64, y1: f64, s0: f64, s1: f64) -> f64 {
        let r = TRUNCATION * self.t.sqrt();
        let (y0, y1) = (y0.max(-r), y1.min(r));
        let (s0, s1) = (s0.max(0.0), s1.min(r));
        if y0 >= y1 || s0 >= s1 {
            return 0.0;
        }
        let piece = |a: f64, b: f64| {
            if a >= b {
                return 0.0;
            }
            quadrature::integrate_2d(
                |y, s| density_unchecked(y, s, self.t),
                a,
                b,
                |_| s0,
                |_| s1,
                QUAD_TOL,
            )
        };
        if y0 < 0.0 && y1 > 0.0 {
            piece(y0, 0.0) + piece(0.0, y1)
        } else {
            piece(y0, y1)
        }
    }

    /// Exact draw of `(B(t), ℓ(B(t), t))` through the reflection principle.
    ///
    /// `B ~ N(0, t)`; given `B = b`, `P{S ≥ s} = exp(−2s(s − b)/t)` for
    /// `s ≥ max(b, 0)`, which inverts to `S = (b + √(b² + 2tE))/2` with
    /// `E ~ Exp(1)`. Then `((S − B)·I, S)` with a fair sign `I`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (b, s) = self.sample_level_and_max(rng);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        ((s - b) * sign, s)
    }

    /// Exact draw of `(B(t), S(t))`.
    pub fn sample_level_and_max<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z: f64 = StandardNormal.sample(rng);
        let e: f64 = Exp1.sample(rng);
        let b = z * self.t.sqrt();
        let s = 0.5 * (b + (b * b + 2.0 * self.t * e).sqrt());
        (b, s)
    }
}

/// `count` exact draws of `S(t)`, which by Lévy's identity has the law of
/// `ℓ(0, t)`. Draw `i` depends only on `(seed, i)`.
pub fn levy_local_time_samples(t: f64, seed: u64, count: usize) -> Result<Vec<f64>> {
    let model = DensityModel::new(t)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(derive_seed(seed, i), Lane::Gaussian);
            model.sample_level_and_max(&mut rng).1
        })
        .collect())
}

/// Which member of the identity chain to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `(B(t), ℓ(B(t), t))`: level and wall height under the walker.
    Lhs,
    /// `(B(t), ℓ(0, t))`: time reversal moves the height to the origin.
    Reversal,
    /// `(S(t) − B(t), S(t))`: Lévy's identity for `(|B(t)|, ℓ(0, t))`.
    Levy,
    /// `((S(t) − B(t))·I, S(t))` with an independent fair sign `I`.
    Signed,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Lhs => "lhs",
            Side::Reversal => "reversal",
            Side::Levy => "levy",
            Side::Signed => "signed",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lhs" => Ok(Side::Lhs),
            "reversal" => Ok(Side::Reversal),
            "levy" => Ok(Side::Levy),
            "signed" => Ok(Side::Signed),
            _ => Err(Error::Unknown { kind: "identity side", name: s.into() }),
        }
    }
}

/// One `side` pair per replicate, each from a walk of `⌈n·t⌉` steps rescaled
/// by `n^(-1/2)`. Replicate `r` uses seed `derive_seed(seed, r)`; its sign
/// (for [`Side::Signed`]) comes from that seed's `Signs` lane.
pub fn sample_identity_pairs(
    t: f64,
    seed: u64,
    n: u64,
    replicates: usize,
    side: Side,
) -> Result<Vec<(f64, f64)>> {
    check_time(t)?;
    if n == 0 {
        return Err(Error::InvalidScale("n must be at least 1".into()));
    }
    let steps = step_at_time(n, t);
    let root = (n as f64).sqrt();
    Ok((0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let rs = derive_seed(seed, r);
            let mut walk = WalkStream::new(rs);
            walk.advance_by(steps);
            let site = walk.site();
            let (a, b) = match side {
                Side::Lhs => (site as f64, walk.field().get(site) as f64),
                Side::Reversal => (site as f64, walk.field().get(0) as f64),
                Side::Levy | Side::Signed => {
                    let m = walk.max_site();
                    let gap = (m - site) as f64;
                    let gap = if side == Side::Signed {
                        gap * sign_stream(rs).next().expect("infinite")
                    } else {
                        gap
                    };
                    (gap, m as f64)
                }
            };
            (a / root, b / root)
        })
        .collect())
}

/// Multiplies the first coordinate of each pair by the matching sign.
pub fn apply_signs(pairs: &[(f64, f64)], signs: impl IntoIterator<Item = f64>) -> Result<Vec<(f64, f64)>> {
    let out: Vec<_> = pairs.iter().zip(signs).map(|(&(a, b), s)| (a * s, b)).collect();
    if out.len() != pairs.len() {
        return Err(invalid("fewer signs than pairs"));
    }
    Ok(out)
}
