//! Counter-based random streams.
//!
//! Every path draws from its own ChaCha8 keystream selected by
//! `(master_seed, stream)`, so a replication's random numbers depend only on
//! its index and never on which worker runs it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct PathRng {
    inner: ChaCha8Rng,
    bits: u64,
    bits_left: u32,
}

impl PathRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self {
            inner,
            bits: 0,
            bits_left: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fair sign, `+1.0` or `-1.0`, consuming one buffered bit.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.bits_left == 0 {
            self.bits = self.inner.next_u64();
            self.bits_left = 64;
        }
        let b = self.bits & 1;
        self.bits >>= 1;
        self.bits_left -= 1;
        if b == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Bernoulli draw with success probability `p`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// SplitMix64 finalizer, used to derive independent master seeds for
/// different levels of an experiment.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
