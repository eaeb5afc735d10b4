//! Seeded random streams.
//!
//! Every stream is a xoshiro256++ generator whose 256-bit state is expanded
//! from a 64-bit seed with SplitMix64 (`Xoshiro256PlusPlus::seed_from_u64`).
//! Independent purposes (initialization, shuffling, dropout, ...) draw from
//! distinct streams derived from one user seed, so changing how much one
//! consumer draws never perturbs another.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// One SplitMix64 output step, used to mix a stream id into a seed.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    seeded(derive_seed(seed, stream))
}

/// Stream ids in use across the crate.
pub mod streams {
    pub const BACKBONE_INIT: u64 = 1;
    pub const HEAD_INIT: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const DROPOUT: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const GRADCHECK: u64 = 7;
}
