//! Deterministic, seedable random streams.
//!
//! A [`RngStream`] wraps the ChaCha8 generator keyed by a 64-bit seed.
//! Independent substreams are derived from the same seed through ChaCha's
//! 64-bit stream counter (mixed with a splitmix64 finalizer so nested
//! derivations do not collide), which lets each consumer -- weight init,
//! corruption noise, dropout masks, per-sample dataset draws -- own a stream
//! without coordinating with the others.
//!
//! Gaussian samples use the Box-Muller transform (cosine branch), uniform
//! doubles take the top 53 bits of the next word. The same `(seed, stream)`
//! pair therefore reproduces the identical sequence on every platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> RngStream {
        RngStream::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    /// Derive an independent stream from the same seed. Deterministic in
    /// `(self.stream, index)`; derivations may be nested.
    pub fn substream(&self, index: u64) -> RngStream {
        let child = mix64(self.stream ^ mix64(index ^ 0xA076_1D64_78BD_642F));
        RngStream::with_stream(self.seed, child)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    /// Uniform double in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Gaussian sample via Box-Muller (cosine branch). Each call consumes
    /// exactly two uniform draws. `std_dev = 0` returns `mean` exactly.
    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln() finite
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        mean + std_dev * radius * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let i = (self.uniform() * n as f64) as usize;
        i.min(n - 1)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
