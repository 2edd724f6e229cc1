//! Frozen pseudorandom streams.
//!
//! Generator: xoshiro256++ whose 256-bit state is filled from the 64-bit seed
//! by SplitMix64 (`rand_xoshiro` 0.7, `seed_from_u64`). Uniforms take the top
//! 53 bits of each output; normals use the Box–Muller transform with both
//! outputs of a pair consumed in order (cosine branch first). Transcendentals
//! come from `libm` so streams do not depend on the platform math library.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

pub struct Rng {
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // (0, 1] so the logarithm stays finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * libm::sin(theta));
        radius * libm::cos(theta)
    }

    /// Fisher–Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Derives a sub-seed for a named purpose so independent streams never share state.
pub fn derive_seed(domain: &str, seed: u64, extra: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(domain.as_bytes());
    hasher.write(&[0u8]);
    hasher.write(&seed.to_le_bytes());
    hasher.write(extra);
    hasher.finish()
}
