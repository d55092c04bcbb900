//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] seeded
//! through [`derive_seed`], so that a replication, grid cell or fold can be
//! regenerated in isolation from the master seed and its path of indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PceRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a path of indices into an independent sub-seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn rng_from_seed(seed: u64) -> PceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sub_rng(seed: u64, path: &[u64]) -> PceRng {
    rng_from_seed(derive_seed(seed, path))
}
