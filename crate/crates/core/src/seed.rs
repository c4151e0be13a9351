//! Stable seed derivation.
//!
//! Every random stream in the engine is keyed by a tuple of integers and
//! strings mixed through splitmix64. The mixing is platform and toolchain
//! independent, unlike `std::hash::DefaultHasher`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Incremental seed builder: `SeedKey::new(master).with(d).with_str(e).finish()`.
#[derive(Debug, Clone, Copy)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(master: u64) -> Self {
        SeedKey(splitmix64(master))
    }

    pub fn with(self, v: u64) -> Self {
        SeedKey(splitmix64(self.0 ^ splitmix64(v)))
    }

    pub fn with_str(self, s: &str) -> Self {
        self.with(fnv1a(s.as_bytes()))
    }

    pub fn finish(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
