//! Seeded generator and the per-caller stream bundle.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_xorshift::XorShiftRng;
use serde::{Deserialize, Serialize};

/// A seeded xorshift generator whose full state serializes, so stream
/// positions survive persistence exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRng(XorShiftRng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(XorShiftRng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        rand::Rng::next_u64(&mut self.0)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Always consumes exactly one draw, so degenerate probabilities keep
    /// the stream aligned with non-degenerate runs.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform in `0..n`; `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        self.0.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }
}

/// Independent streams a caller draws from. Each stream is seeded from the
/// caller seed through a distinct salt, so draws on one never shift another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreams {
    /// Evaluation/training split of cached samples.
    pub split: SeededRng,
    /// Supervision sampling of call outputs.
    pub feedback: SeededRng,
    /// Random gating.
    pub gate: SeededRng,
    /// Bagging partitions and model initialization.
    pub train: SeededRng,
}

impl RngStreams {
    pub fn from_seed(seed: u64) -> Self {
        let derive = |salt: u64| SeededRng::new(SeededRng::new(seed ^ salt).next_u64());
        Self {
            split: derive(0x5bd1_e995),
            feedback: derive(0x1b87_3593),
            gate: derive(0xcc9e_2d51),
            train: derive(0xe654_6b64),
        }
    }
}
