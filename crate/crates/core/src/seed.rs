//! Seed derivation.
//!
//! Every random stream in the crate is keyed by a 64-bit value derived with
//! the SplitMix64 finalizer (Steele, Lea & Flood 2014):
//!
//! ```text
//! z = x + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! Combining a seed with a key is `splitmix64(seed ^ splitmix64(key))`, so a
//! task's stream depends only on (global seed, task key) and never on the
//! order in which tasks are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, key: u64) -> u64 {
    splitmix64(seed ^ splitmix64(key))
}

/// Order-sensitive hash of a sequence of words.
pub fn hash_words<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    words
        .into_iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, w| splitmix64(acc ^ splitmix64(w)))
}

pub fn rng_for(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, key))
}
