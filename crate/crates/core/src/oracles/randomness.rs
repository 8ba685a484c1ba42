//! Public randomness shared by all users and the analyst.

use serde::{Deserialize, Serialize};

use crate::nets::NetPoint;
use crate::rng::{fnv1a, splitmix64};

/// Mersenne prime `2^61 - 1`.
pub const P61: u64 = (1 << 61) - 1;

fn mod_p61(x: u128) -> u64 {
    let p = P61 as u128;
    let mut r = (x & p) + ((x >> 61) & p) + (x >> 122);
    while r >= p {
        r -= p;
    }
    r as u64
}

/// A bucket identifier: a 61-bit digest of the bucket's byte encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bucket(pub u64);

impl Bucket {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Bucket(splitmix64(fnv1a(bytes)) % P61)
    }

    pub fn of(z: &NetPoint) -> Self {
        Self::from_bytes(&z.bucket_bytes())
    }
}

/// Coefficients of one member `v -> (a v + b) mod p` of a pairwise
/// independent family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashCoeffs {
    a: u64,
    b: u64,
}

impl HashCoeffs {
    pub fn eval(&self, v: Bucket) -> u64 {
        mod_p61(self.a as u128 * v.0 as u128 + self.b as u128)
    }

    /// `Z_{v,u}` in `{-1, +1}`.
    pub fn sign(&self, v: Bucket) -> i8 {
        if self.eval(v) & 1 == 0 {
            1
        } else {
            -1
        }
    }
}

/// The public sign matrix `Z` and bucket hash, derived from one seed.
/// Column `u` (one per user or virtual user) is an independent member of a
/// pairwise independent family, so `Z_{v,u}` and `Z_{v',u}` are independent
/// uniform signs for `v != v'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedRandomness {
    pub seed: u64,
}

impl SharedRandomness {
    pub fn new(seed: u64) -> Self {
        SharedRandomness { seed }
    }

    fn coeffs_for(&self, tag: u64, index: u64) -> HashCoeffs {
        let s = splitmix64(self.seed ^ splitmix64(tag));
        let a = splitmix64(s ^ splitmix64(index.wrapping_mul(2).wrapping_add(1))) % (P61 - 1) + 1;
        let b = splitmix64(s ^ splitmix64(index.wrapping_mul(2).wrapping_add(2))) % P61;
        HashCoeffs { a, b }
    }

    /// Column `u` of the sign matrix.
    pub fn column(&self, user: u64) -> HashCoeffs {
        self.coeffs_for(1, user)
    }

    pub fn sign(&self, v: Bucket, user: u64) -> i8 {
        self.column(user).sign(v)
    }

    /// Shared bucket hash into `0..range`.
    pub fn bucket_hash(&self, v: Bucket, range: u64) -> u64 {
        self.coeffs_for(2, 0).eval(v) % range
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_matches_u128_mod() {
        for x in [0u128, 1, P61 as u128, P61 as u128 * 3 + 5, u64::MAX as u128 * u64::MAX as u128] {
            assert_eq!(mod_p61(x) as u128, x % P61 as u128);
        }
    }

    #[test]
    fn signs_look_balanced() {
        let z = SharedRandomness::new(11);
        let v = Bucket::from_bytes(b"bucket");
        let s: i64 = (0..20_000).map(|u| z.sign(v, u) as i64).sum();
        assert!(s.abs() < 600, "{s}");
        let w = Bucket::from_bytes(b"other");
        let agree: i64 = (0..20_000).map(|u| (z.sign(v, u) * z.sign(w, u)) as i64).sum();
        assert!(agree.abs() < 600, "{agree}");
    }

    #[test]
    fn bucket_hash_in_range() {
        let z = SharedRandomness::new(3);
        for i in 0..100u64 {
            assert!(z.bucket_hash(Bucket(i), 7) < 7);
        }
    }
}
