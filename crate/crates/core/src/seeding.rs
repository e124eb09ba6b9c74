//! Independent, order-free RNG streams derived from a master seed.
//!
//! Every randomized quantity is drawn from a stream keyed by
//! `(master_seed, stream, index)`, so work items can be generated in any order
//! or in parallel with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SCENE: u64 = 0x5343_454e_4500_0001;
pub const TEXTURE: u64 = 0x5445_5854_5552_0002;
pub const DIFFUSION: u64 = 0x4449_4646_5553_0003;
pub const PROMPTS: u64 = 0x5052_4f4d_5054_0004;
pub const SPLITS: u64 = 0x5350_4c49_5453_0005;
pub const LIGHT: u64 = 0x4c49_4748_5400_0006;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
