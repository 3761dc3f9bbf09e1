//! Seeded random streams with a fixed draw contract.
//!
//! All sampling in the crate goes through [`SeededRng`], a ChaCha8 stream
//! keyed by a 64-bit seed. Draws are derived from raw `u64` words with the
//! conversions below, not from `rand` distributions, so a recorded seed
//! replays identically across crate versions and implementations:
//!
//! - `next_f64`: `(word >> 11) * 2^-53`, uniform on `[0, 1)`.
//! - `uniform(lo, hi)`: `lo + (hi - lo) * next_f64()`.
//! - `uniform_int(lo, hi)`: `lo + floor(next_f64() * (hi - lo + 1))`, inclusive.
//! - `normal()`: Box-Muller on two consecutive `next_f64` draws, cosine branch.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for a sub-task identified by `path`, e.g. `(seed, person, view)`.
    pub fn derived(seed: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(seed, path))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo + 1) as f64;
        lo + ((self.next_f64() * span) as usize).min(hi - lo)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        // 1 - u1 lies in (0, 1], so the log is finite.
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.uniform_int(0, i);
            out.swap(i, j);
        }
        out
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}
