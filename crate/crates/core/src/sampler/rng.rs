//! Seeded, platform-independent random streams.
//!
//! Every consumer draws from ChaCha8 keyed by `seed_from_u64(seed)` with a
//! fixed stream id per purpose, so one seed yields independent,
//! reproducible sequences for point sampling, per-block FPS starts and
//! parameter init.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const STREAM_POINTS: u64 = 0;
/// Block `b` draws its FPS start from stream `STREAM_FPS + b`.
pub const STREAM_FPS: u64 = 1;
pub const STREAM_INIT: u64 = 1 << 32;
pub const STREAM_TEMPLATES: u64 = 2 << 32;

#[derive(Debug, Clone)]
pub struct SplitRng(ChaCha8Rng);

impl SplitRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `[0, n)` by rejection. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }
}
