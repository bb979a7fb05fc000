//! Seed derivation for independent, schedule-free random substreams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is a
//! hash of the run seed and a path of integer tags (iteration, sample index,
//! purpose). Work can then be split across threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

pub mod tag {
    pub const INIT: u64 = 0x494e_4954;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const RESAMPLE: u64 = 0x5253_4d50;
    pub const OFFSPRING: u64 = 0x4f46_4653;
    pub const LOOKAHEAD: u64 = 0x4c4f_4f4b;
    pub const CLASS: u64 = 0x434c_4153;
    pub const MORE: u64 = 0x4d4f_5245;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const WORLD: u64 = 0x574f_524c;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of tags.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Hashes a string tag (e.g. a class label) into a 64-bit tag (FNV-1a).
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive(seed, path))
}
