//! Seeding helpers. Every stochastic routine takes a `u64` seed and derives
//! its generator here, so runs are reproducible bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `index` of an experiment seeded with `base`.
/// Distinct indices give distinct seeds.
pub fn replicate_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index))
}
