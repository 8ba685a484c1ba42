//! Shuffle-model bucketed vector summation.
//!
//! Every user quantizes its vector, writes it into the hashed cell of its
//! bucket in an `s x d` table over `Z_p`, and splits each table entry into
//! `m` additive shares. The first user also adds discrete Gaussian noise to
//! every entry. The analyst sees only the shuffled multiset of shares, whose
//! cell-wise sums are the noisy table.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::discrete_gaussian::{self, Variance};
use super::randomness::{Bucket, SharedRandomness};
use crate::error::{Error, Result};
use crate::rng;

/// Largest table height; bucket indices travel as 4-byte integers.
pub const MAX_BUCKETS: u64 = u32::MAX as u64;

/// Largest `s d m` for which the full message list is materialized.
pub const MESSAGE_LIMIT: u64 = 20_000_000;

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    (a as u128 * b as u128 % p as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, p);
        }
        a = mul_mod(a, a, p);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'outer: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `x`.
pub fn next_prime_above(x: u64) -> u64 {
    let mut c = x + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Protocol parameters for `n` users with vectors in the unit ball of `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleConfig {
    pub n: u64,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    /// Table height `ceil(2n / beta)`, capped at `MAX_BUCKETS`.
    pub s: u64,
    /// Quantization step `1/n`.
    pub eta: f64,
    /// Noise scale `20 ln(s d / delta) / eps`.
    pub sigma: f64,
    /// Smallest prime above `2n/eta + 20 sigma ln(s d / beta)`.
    pub p: u64,
    /// Shares per entry, `ceil(3 (1 + ln(2 d p / delta) / ln n))`.
    pub m: usize,
}

impl ShuffleConfig {
    pub fn new(n: u64, d: usize, epsilon: f64, delta: f64, beta: f64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyInput);
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} not in (0, 1)")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta = {beta} not in (0, 1)")));
        }
        let s = (2.0 * n as f64 / beta).ceil().min(MAX_BUCKETS as f64) as u64;
        let eta = 1.0 / n as f64;
        let sd = s as f64 * d as f64;
        let sigma = 20.0 * (sd / delta).ln() / epsilon;
        let threshold = 2.0 * n as f64 / eta + 20.0 * sigma * (sd / beta).ln();
        if threshold >= (1u64 << 62) as f64 {
            return Err(Error::InvalidParameter(format!("field size {threshold} too large")));
        }
        let p = next_prime_above(threshold.ceil() as u64);
        let ln_n = (n.max(2) as f64).ln();
        let m = (3.0 * (1.0 + (2.0 * d as f64 * p as f64 / delta).ln() / ln_n)).ceil() as usize;
        Ok(ShuffleConfig {
            n,
            d,
            epsilon,
            delta,
            beta,
            s,
            eta,
            sigma,
            p,
            m,
        })
    }

    pub fn messages_per_user(&self) -> u64 {
        self.s.saturating_mul(self.d as u64).saturating_mul(self.m as u64)
    }

    /// Accuracy guarantee with unit constant: noise `sigma sqrt(d) ln(s d / beta)`
    /// plus quantization `n sqrt(d)`, both in units of `eta`.
    pub fn error_bound(&self) -> f64 {
        let sd = self.s as f64 * self.d as f64;
        let rd = (self.d as f64).sqrt();
        self.eta * (self.sigma * rd * (sd / self.beta).ln() + self.n as f64 * rd)
    }

    fn to_field(&self, v: i64) -> u64 {
        v.rem_euclid(self.p as i64) as u64
    }

    /// Map a field element back to a real: values above `p/2` are negative.
    pub fn recenter(&self, v: u64) -> f64 {
        if v > self.p / 2 {
            (v as f64 - self.p as f64) * self.eta
        } else {
            v as f64 * self.eta
        }
    }

    fn quantize(&self, x: &[f64]) -> Result<Vec<u64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let nx = crate::points::norm(x);
        if nx > 1.0 + 1e-9 {
            return Err(Error::OutsideBall(nx));
        }
        Ok(x.iter().map(|&v| self.to_field((v / self.eta).floor() as i64)).collect())
    }

    fn variance(&self) -> Variance {
        Variance::from_sigma(self.sigma).expect("sigma is finite")
    }

    /// Noise the first user adds to cell `(bucket, coord)`, derived from its
    /// private noise seed.
    pub fn cell_noise(&self, noise_seed: u64, bucket: u64, coord: usize) -> u64 {
        let mut r = rng::stream(noise_seed, "cell_noise", bucket * self.d as u64 + coord as u64);
        self.to_field(discrete_gaussian::sample(self.variance(), &mut r))
    }
}

/// `m` uniformly random shares in `Z_p` summing to `x`.
pub fn split_and_mix<R: Rng + ?Sized>(x: u64, m: usize, p: u64, rng: &mut R) -> Vec<u64> {
    assert!(m >= 1 && p >= 2);
    let mut shares = Vec::with_capacity(m);
    let mut sum = 0u64;
    for _ in 0..m - 1 {
        let r = rng.random_range(0..p);
        sum = (sum + r) % p;
        shares.push(r);
    }
    shares.push((x % p + p - sum) % p);
    shares
}

/// One share: cell `(bucket, coord)` and a field element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShuffleMessage {
    pub bucket: u32,
    pub coord: u32,
    pub value: u64,
}

impl ShuffleMessage {
    pub const BYTES: usize = 16;

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut b = [0u8; 16];
        b[..4].copy_from_slice(&self.bucket.to_le_bytes());
        b[4..8].copy_from_slice(&self.coord.to_le_bytes());
        b[8..].copy_from_slice(&self.value.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() != 16 {
            return Err(Error::Wire(format!("message of {} bytes", b.len())));
        }
        Ok(ShuffleMessage {
            bucket: u32::from_le_bytes(b[..4].try_into().unwrap()),
            coord: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            value: u64::from_le_bytes(b[8..].try_into().unwrap()),
        })
    }
}

/// Full encoder: all `s d m` shares of one user, unshuffled. `user == 0`
/// marks the user who adds noise.
pub fn shuffle_bvs_encode<R: Rng + ?Sized>(
    x: &[f64],
    y: Bucket,
    user: u64,
    cfg: &ShuffleConfig,
    z: &SharedRandomness,
    rng: &mut R,
) -> Result<Vec<ShuffleMessage>> {
    if cfg.messages_per_user() > MESSAGE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "{} messages per user exceeds the materialization limit",
            cfg.messages_per_user()
        )));
    }
    let noise_seed: u64 = rng.random();
    let xq = cfg.quantize(x)?;
    let target = z.bucket_hash(y, cfg.s);
    let mut out = Vec::with_capacity(cfg.messages_per_user() as usize);
    for l in 0..cfg.s {
        for k in 0..cfg.d {
            let mut u = if l == target { xq[k] } else { 0 };
            if user == 0 {
                u = (u + cfg.cell_noise(noise_seed, l, k)) % cfg.p;
            }
            for share in split_and_mix(u, cfg.m, cfg.p, rng) {
                out.push(ShuffleMessage {
                    bucket: l as u32,
                    coord: k as u32,
                    value: share,
                });
            }
        }
    }
    Ok(out)
}

/// The net effect of one user's shares on the cell sums: its quantized vector
/// in one row, plus a noise seed for the first user. Summing shares cell by
/// cell gives exactly this, so decoding from contributions and from the full
/// message multiset agree bit for bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleContribution {
    pub bucket: u32,
    pub values: Vec<u64>,
    pub noise_seed: Option<u64>,
}

/// Compact encoder, consuming the user's randomness the same way as
/// `shuffle_bvs_encode` does for the noise.
pub fn shuffle_bvs_contribution<R: Rng + ?Sized>(
    x: &[f64],
    y: Bucket,
    user: u64,
    cfg: &ShuffleConfig,
    z: &SharedRandomness,
    rng: &mut R,
) -> Result<ShuffleContribution> {
    let noise_seed: u64 = rng.random();
    let values = cfg.quantize(x)?;
    Ok(ShuffleContribution {
        bucket: z.bucket_hash(y, cfg.s) as u32,
        values,
        noise_seed: (user == 0).then_some(noise_seed),
    })
}

/// Uniformly permute a multiset of messages.
pub fn shuffle_messages<R: Rng + ?Sized>(msgs: &mut [ShuffleMessage], rng: &mut R) {
    msgs.shuffle(rng);
}

/// Cell-wise sums of everything the shuffler delivered.
#[derive(Debug, Clone)]
pub struct ShuffleAggregate {
    cfg: ShuffleConfig,
    z: SharedRandomness,
    cells: HashMap<(u32, u32), u64>,
    noise_seeds: Vec<u64>,
}

impl ShuffleAggregate {
    pub fn new(cfg: ShuffleConfig, z: SharedRandomness) -> Self {
        ShuffleAggregate {
            cfg,
            z,
            cells: HashMap::new(),
            noise_seeds: Vec::new(),
        }
    }

    pub fn config(&self) -> &ShuffleConfig {
        &self.cfg
    }

    pub fn absorb_messages(&mut self, msgs: &[ShuffleMessage]) -> Result<()> {
        let p = self.cfg.p;
        for msg in msgs {
            if msg.bucket as u64 >= self.cfg.s || msg.coord as usize >= self.cfg.d || msg.value >= p {
                return Err(Error::Wire(format!("message out of range: {msg:?}")));
            }
            let c = self.cells.entry((msg.bucket, msg.coord)).or_insert(0);
            *c = (*c + msg.value) % p;
        }
        Ok(())
    }

    pub fn absorb_contribution(&mut self, c: &ShuffleContribution) -> Result<()> {
        if c.values.len() != self.cfg.d {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.d,
                got: c.values.len(),
            });
        }
        let p = self.cfg.p;
        for (k, &v) in c.values.iter().enumerate() {
            if v != 0 {
                let cell = self.cells.entry((c.bucket, k as u32)).or_insert(0);
                *cell = (*cell + v) % p;
            }
        }
        if let Some(s) = c.noise_seed {
            self.noise_seeds.push(s);
        }
        Ok(())
    }

    /// Estimated vector sum of the users holding `y`.
    pub fn decode(&self, y: Bucket) -> Vec<f64> {
        let p = self.cfg.p;
        let l = self.z.bucket_hash(y, self.cfg.s);
        (0..self.cfg.d)
            .map(|k| {
                let mut v = self.cells.get(&(l as u32, k as u32)).copied().unwrap_or(0);
                for &s in &self.noise_seeds {
                    v = (v + self.cfg.cell_noise(s, l, k)) % p;
                }
                self.cfg.recenter(v)
            })
            .collect()
    }
}

/// Decode a bucket directly from a (shuffled) message multiset.
pub fn shuffle_bvs_decode(
    msgs: &[ShuffleMessage],
    y: Bucket,
    cfg: &ShuffleConfig,
    z: &SharedRandomness,
) -> Result<Vec<f64>> {
    let mut agg = ShuffleAggregate::new(*cfg, *z);
    agg.absorb_messages(msgs)?;
    Ok(agg.decode(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn primes() {
        let small: Vec<u64> = (0..30).filter(|&n| is_prime(n)).collect();
        assert_eq!(small, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert!(is_prime(2_305_843_009_213_693_951));
        assert!(!is_prime(3_215_031_751));
        assert_eq!(next_prime_above(7), 11);
        assert_eq!(next_prime_above(13), 17);
        assert_eq!(next_prime_above(1), 2);
    }

    #[test]
    fn shares_sum_to_input() {
        let mut rng = stream(1, "t", 0);
        for &(x, m, p) in &[(0u64, 1usize, 7u64), (5, 3, 7), (6, 10, 7), (123_456, 20, 1_000_003)] {
            let s = split_and_mix(x, m, p, &mut rng);
            assert_eq!(s.len(), m);
            assert!(s.iter().all(|&v| v < p));
            assert_eq!(s.iter().fold(0, |a, &v| (a + v) % p), x % p);
        }
    }

    #[test]
    fn config_formulas() {
        let c = ShuffleConfig::new(200, 4, 1.0, 1e-5, 0.05).unwrap();
        assert_eq!(c.s, 8000);
        assert_eq!(c.eta, 1.0 / 200.0);
        assert!((c.sigma - 20.0 * (32000.0f64 / 1e-5).ln()).abs() < 1e-9);
        assert!(is_prime(c.p));
        let thr = 2.0 * 200.0 * 200.0 + 20.0 * c.sigma * (32000.0f64 / 0.05).ln();
        assert!(c.p as f64 > thr);
        assert!(!(thr.ceil() as u64 + 1..c.p).any(is_prime));
        let m = (3.0 * (1.0 + (8.0 * c.p as f64 / 1e-5).ln() / 200f64.ln())).ceil() as usize;
        assert_eq!(c.m, m);
    }

    #[test]
    fn recentering() {
        let c = ShuffleConfig::new(10, 1, 1.0, 1e-3, 0.5).unwrap();
        assert_eq!(c.recenter(0), 0.0);
        assert!((c.recenter(c.p - 3) + 0.3).abs() < 1e-12);
        assert!((c.recenter(5) - 0.5).abs() < 1e-12);
    }

    fn tiny() -> ShuffleConfig {
        // Few buckets so the full message list stays small.
        ShuffleConfig::new(6, 2, 2.0, 0.1, 0.9).unwrap()
    }

    #[test]
    fn message_and_contribution_paths_agree() {
        let cfg = tiny();
        let z = SharedRandomness::new(4);
        let xs = [[0.3, -0.2], [0.1, 0.1], [-0.5, 0.4], [0.0, 0.9], [0.2, 0.2], [-0.1, -0.1]];
        let buckets = [Bucket(1), Bucket(2), Bucket(1), Bucket(3), Bucket(2), Bucket(1)];
        let mut all = Vec::new();
        let mut agg = ShuffleAggregate::new(cfg, z);
        for (u, (x, y)) in xs.iter().zip(&buckets).enumerate() {
            let mut r1 = stream(9, "user", u as u64);
            all.extend(shuffle_bvs_encode(x, *y, u as u64, &cfg, &z, &mut r1).unwrap());
            let mut r2 = stream(9, "user", u as u64);
            agg.absorb_contribution(&shuffle_bvs_contribution(x, *y, u as u64, &cfg, &z, &mut r2).unwrap())
                .unwrap();
        }
        assert_eq!(all.len() as u64, 6 * cfg.messages_per_user());
        let mut shuffled = all.clone();
        shuffle_messages(&mut shuffled, &mut stream(0, "shuffle", 0));
        for y in [Bucket(1), Bucket(2), Bucket(3), Bucket(4)] {
            let a = shuffle_bvs_decode(&all, y, &cfg, &z).unwrap();
            let b = shuffle_bvs_decode(&shuffled, y, &cfg, &z).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, agg.decode(y));
        }
    }

    #[test]
    fn wire_round_trip() {
        let m = ShuffleMessage {
            bucket: 0xdead_beef,
            coord: 7,
            value: u64::MAX - 1,
        };
        assert_eq!(ShuffleMessage::from_bytes(&m.to_bytes()).unwrap(), m);
        assert!(ShuffleMessage::from_bytes(&[0u8; 15]).is_err());
    }

    #[test]
    fn rejects_oversized_or_bad_input() {
        let cfg = ShuffleConfig::new(1000, 4, 1.0, 1e-5, 0.001).unwrap();
        let z = SharedRandomness::new(0);
        let mut r = stream(0, "t", 0);
        assert!(shuffle_bvs_encode(&[0.0; 4], Bucket(0), 0, &cfg, &z, &mut r).is_err());
        assert!(shuffle_bvs_contribution(&[1.0; 4], Bucket(0), 1, &cfg, &z, &mut r).is_err());
        assert!(shuffle_bvs_contribution(&[0.0; 3], Bucket(0), 1, &cfg, &z, &mut r).is_err());
    }
}
