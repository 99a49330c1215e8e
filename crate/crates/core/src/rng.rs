//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! whose seed is a hash of a base seed and a path of labels, so sibling
//! streams never overlap and results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash `base` and `path` into a child seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(base: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, path))
}

/// Stable labels for seed-tree branches.
pub mod branch {
    pub const KDE: u64 = 1;
    pub const ITERATION: u64 = 2;
    pub const PRELIMINARY: u64 = 3;
    pub const VARIANCE: u64 = 4;
    pub const SIGMA_PROBE: u64 = 5;
    pub const BATCH: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_deterministic_and_path_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }

    #[test]
    fn streams_reproduce() {
        let a: Vec<f64> = (0..4).map(|_| 0.0).scan(stream(3, &[9]), |r, _| Some(r.random())).collect();
        let b: Vec<f64> = (0..4).map(|_| 0.0).scan(stream(3, &[9]), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
    }
}
