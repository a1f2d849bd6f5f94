//! Counter-based seed derivation.
//!
//! Every random stream in the engine is a ChaCha8 generator whose seed is a
//! pure function of a root seed and a small tuple of integers (box index,
//! trial number, resample counter, ...). Streams therefore never depend on
//! the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a seed.
pub fn derive(root: u64, words: &[u64]) -> u64 {
    let mut h = splitmix64(root);
    for &w in words {
        h = splitmix64(h ^ splitmix64(w));
    }
    h
}

/// Stream domain tags, so that e.g. trial 3 and box 3 never collide.
pub mod tag {
    pub const SAMPLE_BOX: u64 = 0x5341_4d50;
    pub const RESAMPLE_BOX: u64 = 0x5245_5341;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const JITTER: u64 = 0x4a49_5454;
    pub const FRESH: u64 = 0x4652_4553;
    pub const INSTANCE: u64 = 0x494e_5354;
}

pub fn trial_seed(root: u64, trial: usize) -> u64 {
    derive(root, &[tag::TRIAL, trial as u64])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_separates_words() {
        assert_ne!(derive(1, &[2, 3]), derive(1, &[3, 2]));
        assert_ne!(derive(1, &[2]), derive(2, &[2]));
        assert_eq!(derive(9, &[4, 5]), derive(9, &[4, 5]));
    }
}
