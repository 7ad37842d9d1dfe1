//! Seeded randomness.
//!
//! All draws come from ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based
//! stream cipher whose output is specified bit-for-bit and independent of
//! platform endianness or word size. Gaussian variates use the ziggurat
//! sampler from `rand_distr`, which only performs IEEE-754 operations.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deterministic random stream.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `seed ^ index`, used for per-datapoint and
    /// per-replicate work so that results do not depend on scheduling.
    pub fn derive(seed: u64, index: u64) -> Self {
        Self::new(seed ^ index)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Rademacher sign, ±1 with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.inner.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn chi_square(&mut self, dof: f64) -> f64 {
        rand_distr::ChiSquared::new(dof)
            .expect("degrees of freedom validated by caller")
            .sample(&mut self.inner)
    }

    /// Draw an index from unnormalized nonnegative weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                return k;
            }
            u -= w;
        }
        // roundoff: fall back to the last component with positive weight
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}
