//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 block cipher
//! keyed by a 64-bit seed. ChaCha is counter based: the key selects the
//! generator, a 64-bit stream id selects one of 2^64 independent
//! keystreams, and the block counter indexes positions within it. Streams
//! are laid out as follows:
//!
//! * the key is expanded from the seed with `SeedableRng::seed_from_u64`;
//! * the stream id is a [`Lane`] that separates independent uses of one
//!   seed (walk increments, fair signs, Gaussian draws);
//! * replicate `i` of an experiment with master seed `m` uses the seed
//!   `derive_seed(m, i)`, a SplitMix64 mix of the pair.
//!
//! Results therefore depend only on `(master_seed, replicate_index)` and
//! never on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent keystreams carved out of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Steps = 0,
    Signs = 1,
    Gaussian = 2,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(GOLDEN).rotate_left(17))
}

/// The generator for `lane` of `seed`.
pub fn stream(seed: u64, lane: Lane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane as u64);
    rng
}

/// Fair ±1 increments, one bit of the `Steps` lane per step.
#[derive(Debug, Clone)]
pub struct StepStream {
    rng: ChaCha8Rng,
    word: u64,
    bits_left: u32,
}

impl StepStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: stream(seed, Lane::Steps),
            word: 0,
            bits_left: 0,
        }
    }

    #[inline]
    pub fn next_step(&mut self) -> i64 {
        if self.bits_left == 0 {
            self.word = self.rng.next_u64();
            self.bits_left = 64;
        }
        let bit = self.word & 1;
        self.word >>= 1;
        self.bits_left -= 1;
        // bit 1 = heads = step right
        (bit as i64) * 2 - 1
    }
}

impl Iterator for StepStream {
    type Item = i64;

    fn next(&mut self) -> Option<i64> {
        Some(self.next_step())
    }
}

/// Fair ±1 signs from the `Signs` lane.
pub fn sign_stream(seed: u64) -> impl Iterator<Item = f64> {
    let mut bits = StepStream {
        rng: stream(seed, Lane::Signs),
        word: 0,
        bits_left: 0,
    };
    std::iter::from_fn(move || Some(bits.next_step() as f64))
}
