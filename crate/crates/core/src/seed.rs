//! Seed expansion.
//!
//! One experiment seed is expanded into independent per-purpose streams:
//! `derive(seed, stream) = splitmix64(splitmix64(seed) ^ stream)`, where
//! `stream` is one of the constants below (optionally mixed with an index via
//! [`derive_indexed`]). Each stream seeds its own ChaCha8 generator, so
//! toggling one component never shifts the random draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_INIT: u64 = 0x1;
pub const STREAM_BANK: u64 = 0x2;
pub const STREAM_BATCHES: u64 = 0x3;
pub const STREAM_MIXUP: u64 = 0x4;
pub const STREAM_LORA: u64 = 0x5;
pub const STREAM_DATA: u64 = 0x6;

/// One step of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream)
}

pub fn derive_indexed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(derive(seed, stream) ^ splitmix64(index.wrapping_add(0xA5A5)))
}

pub fn rng(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, stream))
}
