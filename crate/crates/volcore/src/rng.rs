//! Seeded random streams.
//!
//! Every consumer of randomness owns an [`Rng`] built from `(seed, stream)`.
//! The underlying generator is PCG64 (XSL-RR 128/64), whose output depends
//! only on integer arithmetic and is therefore identical on every platform.

use rand::{Rng as _, RngExt};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;

// Mixing constant for deriving the 128-bit state from a 64-bit seed.
const SEED_MIX: u128 = 0x9e37_79b9_7f4a_7c15_f39c_c060_5ced_c834;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: Pcg64,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let state = (seed as u128).wrapping_mul(SEED_MIX) ^ ((seed as u128) << 64);
        Rng {
            seed,
            stream,
            inner: Pcg64::new(state, stream as u128),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A new independent stream derived from this generator's seed.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(
            self.seed,
            self.stream.wrapping_mul(0x1_0000_0001).wrapping_add(stream),
        )
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    /// Uniform index in `[0, n)`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
