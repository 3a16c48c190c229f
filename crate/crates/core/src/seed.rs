//! Counter-based seed derivation.
//!
//! A child seed is a pure function of `(parent, index)`, so any plan or
//! sub-stream can be reproduced without replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed number `index` of `parent`.
pub fn split_seed(parent: u64, index: u64) -> u64 {
    mix64(mix64(parent ^ GOLDEN_GAMMA).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Independent RNG streams owned by one collage plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Box count and which boxes leave the pool.
    Sampling = 0,
    /// Background frame choice.
    Background = 1,
    /// Paste positions.
    Placement = 2,
}

pub fn stream_rng(plan_seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(plan_seed, stream as u64))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// FNV-1a, for deriving stable values from names.
pub fn hash_str(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
