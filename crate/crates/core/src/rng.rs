//! Counter-based, splittable random streams.
//!
//! Every consumer derives its own stream from `(seed, domain, a, b)` so the
//! draws for, say, the masks of row 17 in epoch 3 do not depend on how many
//! other rows were processed first or on which thread processed them.

use rand::seq::index;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

/// Stream domains. Distinct domains never share key material.
pub mod domain {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const TRAIN_MASKS: u64 = 3;
    pub const VALID_MASKS: u64 = 4;
    pub const ORACLE: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const OVERSAMPLE: u64 = 7;
    pub const BACKGROUND: u64 = 8;
    pub const CHECK: u64 = 9;
    pub const OUTPUT_PICK: u64 = 10;
    pub const SYNTHETIC: u64 = 11;
}

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0, 0, 0)
    }

    /// Independent stream keyed by `(seed, domain, a, b)`.
    pub fn stream(seed: u64, domain: u64, a: u64, b: u64) -> Self {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&domain.to_le_bytes());
        key[16..24].copy_from_slice(&a.to_le_bytes());
        key[24..32].copy_from_slice(&b.to_le_bytes());
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.uniform();
        while u1 <= f64::MIN_POSITIVE {
            u1 = self.uniform();
        }
        let u2 = self.uniform();
        math::sqrt(-2.0 * math::ln(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// `amount` distinct indices from `0..n`, uniformly at random.
    pub fn sample_indices(&mut self, n: usize, amount: usize) -> index::IndexVec {
        index::sample(&mut self.inner, n, amount)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
