//! Seed derivation.
//!
//! Every randomized step takes a `u64` seed. Sub-seeds (per document, per
//! replicate, per pipeline stage) are derived with SplitMix64 finalization of
//! `seed ^ stream * GOLDEN`, which is stable across platforms and schedules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the sub-seed for `stream` from a parent seed.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ stream.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Named streams so that stages of one pipeline never share randomness.
pub mod stream {
    pub const PERTURB: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const KMEANS: u64 = 3;
    pub const SWAP: u64 = 4;
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
