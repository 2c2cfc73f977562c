//! Seeded ChaCha8 stream; the output for a given seed does not depend on the
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Name recorded in instance metadata.
pub const GENERATOR_NAME: &str = "chacha8";

#[derive(Debug, Clone, PartialEq)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random()
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        self.0.random_range(0..bound)
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}
