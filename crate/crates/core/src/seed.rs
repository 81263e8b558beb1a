//! Stable seed derivation.
//!
//! Every random stream in a run is keyed off one base seed plus a short path
//! of integers (trial index, owner id, stream tag). The mixing is SplitMix64,
//! which is fixed forever, unlike `std`'s `DefaultHasher`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags so that independent consumers never share variates.
pub mod stream {
    pub const FEATURE_NOISE: u64 = 0x01;
    pub const QUERY_NOISE: u64 = 0x02;
    pub const SPLIT: u64 = 0x03;
    pub const TRIAL: u64 = 0x04;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of `parts`.
pub fn stable_hash(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// `base ^ stable_hash(parts)`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    base ^ stable_hash(parts)
}

pub fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
