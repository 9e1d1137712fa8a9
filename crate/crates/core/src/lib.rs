//! Simulation and statistical verification of the random bricklayer.
//!
//! A simple random walk stacks one block per step at its current site. Under
//! diffusive rescaling the walk converges to Brownian motion `B`, the block
//! counts converge to its local time `ℓ(y, t)`, and the curve
//! `K(t) = (B(t), ℓ(B(t), t))` traced by the top of the current column fills
//! the upper half plane.
//!
//! Modules, bottom up:
//!
//! * [`rng`]: seed derivation and counter-based random streams.
//! * [`walk`]: the discrete walk, its occupation field and brick trace.
//! * [`scaling`]: diffusive rescaling and two local-time estimators.
//! * [`curve`]: the bricklayer curve, wall area, coverage and fill order.
//! * [`oracle`]: the exact fixed-time law of `K(t)` and identity samplers.
//! * [`stats`]: KS and chi-square tests plus the [`stats::TestReport`] record.
//! * [`experiment`]: named verification experiments driven by a config.
//! * [`format`]: CSV/JSON emitters used by the command-line front end.

pub mod curve;
pub mod error;
pub mod experiment;
pub mod format;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod scaling;
pub mod stats;
mod sum;
pub mod walk;

pub use error::{Error, Result};
