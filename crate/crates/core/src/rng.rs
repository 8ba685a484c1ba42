//! Seed derivation. Every random choice in the crate comes from a ChaCha8
//! stream labelled by purpose, so one root seed fixes a whole run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive an independent seed for `(label, index)` from `root`.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let a = splitmix64(root ^ fnv1a(label.as_bytes()));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// A ChaCha8 stream for `(label, index)` under `root`.
pub fn stream(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}
