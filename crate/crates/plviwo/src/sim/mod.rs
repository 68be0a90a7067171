//! Synthetic data generation and Monte Carlo studies.

pub mod scenario;
pub mod viwo;
pub mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic per-task generator derived from a base seed and a key path.
pub fn seeded_rng(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mut h: u64 = seed ^ 0x9E37_79B9_7F4A_7C15;
    for k in key {
        h = splitmix(h ^ splitmix(*k));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
