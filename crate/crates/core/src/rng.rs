//! Seed derivation. Every random stage draws from its own ChaCha stream derived from
//! a master seed and a stage tag, so adding a stage never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(master) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(master: u64, tag: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag))
}
