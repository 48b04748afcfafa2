//! Seeded randomness.
//!
//! Every random draw in the toolkit comes from [`ChaCha8Rng`], a portable
//! counter-based generator whose output stream is fixed for a given 64-bit
//! seed on every platform. Independent sub-streams (one per replicate,
//! fold plan or trial) get their seeds from [`derive_seed`], so results do
//! not depend on the order or thread in which replicates run.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for a 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices into a child seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}
