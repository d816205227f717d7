//! Seeded random streams. Each model component draws from its own
//! xoshiro256** stream, seeded from the run seed mixed with the component
//! index, so adding draws to one population never shifts another's.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

/// Multiplier separating per-component seeds (the 64-bit golden ratio).
pub const STREAM_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Largest Poisson mean sampled in one multiplication run; larger means are
/// split into chunks of this size.
const POISSON_CHUNK: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream(Xoshiro256StarStar);

impl Stream {
    pub fn new(seed: u64, component_index: usize) -> Self {
        let mixed = seed ^ (component_index as u64).wrapping_add(1).wrapping_mul(STREAM_OFFSET);
        Stream(Xoshiro256StarStar::seed_from_u64(mixed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) by rejection; `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Poisson variate by Knuth's multiplication method.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean.is_nan() || mean <= 0.0 {
            return 0;
        }
        let mut remaining = mean;
        let mut total = 0;
        while remaining > POISSON_CHUNK {
            total += self.knuth(POISSON_CHUNK);
            remaining -= POISSON_CHUNK;
        }
        total + self.knuth(remaining)
    }

    fn knuth(&mut self, mean: f64) -> u64 {
        let limit = (-mean).exp();
        let mut k = 0;
        let mut p = 1.0;
        loop {
            p *= self.uniform();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }

    pub(crate) fn state_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.0).expect("generator state serializes")
    }
}
