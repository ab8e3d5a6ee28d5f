//! Seeded random streams with a draw counter for reproducibility audits.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ChaCha8 stream that counts how many words it has produced.
#[derive(Debug, Clone)]
pub struct CountingRng {
    inner: ChaCha8Rng,
    draws: u64,
}

impl CountingRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        CountingRng { inner: ChaCha8Rng::seed_from_u64(seed), draws: 0 }
    }

    /// Number of 32/64-bit words drawn so far (byte fills count per 8 bytes).
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl RngCore for CountingRng {
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.draws += dst.len().div_ceil(8) as u64;
        self.inner.fill_bytes(dst)
    }
}

/// SplitMix64 finaliser; used to derive independent per-replica seeds.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
