//! Seed derivation. Every random stream in an episode is a `ChaCha8Rng`
//! keyed by a base seed and a purpose tag, so adding draws to one stream
//! never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams.
pub mod tag {
    pub const PROTOTYPES: u64 = 0x5052_4f54;
    pub const STREAM: u64 = 0x5354_524d;
    pub const POSE: u64 = 0x504f_5345;
    pub const DECISIONS: u64 = 0x4445_4349;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const TEST: u64 = 0x5445_5354;
    pub const INITIAL: u64 = 0x494e_4954;
    pub const PRETRAIN: u64 = 0x5052_4554;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a tag into a new, well-spread seed.
pub fn derive(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived(seed: u64, tag: u64) -> ChaCha8Rng {
    seeded(derive(seed, tag))
}
