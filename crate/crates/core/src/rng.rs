//! Seeded random streams.
//!
//! Every consumer derives its own ChaCha stream from the run seed plus a
//! short path of tags (purpose, client id, round, ...), so results do not
//! depend on the order in which streams are drawn or on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod tag {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const SAMPLE_CLIENTS: u64 = 4;
    pub const KMEANS: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const FORGET: u64 = 7;
    pub const UNLEARN: u64 = 8;
    pub const SYNTHETIC: u64 = 9;
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes `seed` with `path` into a single 64-bit key.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
