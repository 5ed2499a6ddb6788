//! Counter-based seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream seeded by
//! `derive(master, stream, counter)`, so the draw for (stream, counter) never
//! depends on how many values other streams consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

// Stream tags. Distinct constants keep independent consumers apart.
pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_TOY: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_MEMBER: u64 = 4;
pub const STREAM_ACTION: u64 = 5;
pub const STREAM_INIT: u64 = 6;
pub const STREAM_EPISODE: u64 = 7;
pub const STREAM_AGENT: u64 = 8;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ counter)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, counter: u64) -> Rng {
    rng(derive(master, stream, counter))
}
