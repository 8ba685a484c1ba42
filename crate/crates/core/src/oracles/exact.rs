//! Noiseless reference oracles, and a histogram that adds central discrete
//! Gaussian noise to exact counts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::discrete_gaussian::{self, Variance};
use super::randomness::Bucket;
use super::{FrequencyOracle, VectorSumOracle};
use crate::error::{Error, Result};
use crate::nets::{NetFamily, NetPoint};
use crate::rng;

/// Exact generalized histogram: for each net point, the number of users
/// whose representative chain passes through it.
#[derive(Debug, Clone, Default)]
pub struct ExactHistogram {
    counts: HashMap<NetPoint, f64>,
}

impl ExactHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_chain(&mut self, chain: &[NetPoint], weight: f64) {
        for z in chain {
            *self.counts.entry(z.clone()).or_insert(0.0) += weight;
        }
    }

    pub fn from_points(nets: &NetFamily, points: &[Vec<f64>]) -> Result<Self> {
        let mut h = Self::new();
        for x in points {
            h.add_chain(&nets.chain(x)?, 1.0);
        }
        Ok(h)
    }

    pub fn count(&self, z: &NetPoint) -> f64 {
        self.counts.get(z).copied().unwrap_or(0.0)
    }
}

impl FrequencyOracle for ExactHistogram {
    fn frequency(&self, z: &NetPoint) -> f64 {
        self.count(z)
    }
}

/// Exact per-bucket vector sums over the chains.
#[derive(Debug, Clone)]
pub struct ExactVectorSums {
    dim: usize,
    sums: HashMap<NetPoint, Vec<f64>>,
}

impl ExactVectorSums {
    pub fn new(dim: usize) -> Self {
        ExactVectorSums {
            dim,
            sums: HashMap::new(),
        }
    }

    pub fn add(&mut self, chain: &[NetPoint], x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        for z in chain {
            let s = self.sums.entry(z.clone()).or_insert_with(|| vec![0.0; self.dim]);
            for (a, b) in s.iter_mut().zip(x) {
                *a += b;
            }
        }
        Ok(())
    }
}

impl VectorSumOracle for ExactVectorSums {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector_sum(&self, z: &NetPoint) -> Vec<f64> {
        self.sums.get(z).cloned().unwrap_or_else(|| vec![0.0; self.dim])
    }
}

/// Exact counts plus independent `N_Z(0, sigma^2)` noise per bucket. The
/// noise for a bucket is a fixed function of `(seed, bucket)`, so repeated
/// queries agree.
#[derive(Debug, Clone)]
pub struct CentralNoiseHistogram {
    exact: ExactHistogram,
    variance: Variance,
    seed: u64,
}

/// Noise parameters of the central histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralNoise {
    pub sigma: f64,
}

impl CentralNoise {
    /// Gaussian-mechanism scale for a user touching `slots` buckets once
    /// each: `sqrt(2 ln(1.25/delta)) sqrt(slots) / eps`.
    pub fn calibrate(eps: f64, delta: f64, slots: usize) -> Result<Self> {
        if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("eps = {eps}, delta = {delta}")));
        }
        let sigma = (2.0 * (1.25 / delta).ln()).sqrt() * (slots as f64).sqrt() / eps;
        Ok(CentralNoise { sigma })
    }
}

impl CentralNoiseHistogram {
    pub fn new(exact: ExactHistogram, noise: CentralNoise, seed: u64) -> Result<Self> {
        Ok(CentralNoiseHistogram {
            exact,
            variance: Variance::from_sigma(noise.sigma)?,
            seed,
        })
    }
}

impl FrequencyOracle for CentralNoiseHistogram {
    fn frequency(&self, z: &NetPoint) -> f64 {
        let mut r = rng::stream(self.seed, "central_noise", Bucket::of(z).0);
        self.exact.count(z) + discrete_gaussian::sample(self.variance, &mut r) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_counts_cover_chains() {
        let nets = NetFamily::new(2, 3).unwrap();
        let pts = vec![vec![0.1, 0.1], vec![0.12, 0.1], vec![-0.8, 0.0]];
        let h = ExactHistogram::from_points(&nets, &pts).unwrap();
        assert_eq!(h.count(&nets.root()), 3.0);
        let z = nets.decode(3, &pts[0]).unwrap();
        assert_eq!(h.count(&z), 2.0);
        let total: f64 = nets.level_points(2).unwrap().iter().map(|z| h.count(z)).sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn central_noise_is_stable_per_bucket() {
        let nets = NetFamily::new(1, 2).unwrap();
        let h = ExactHistogram::from_points(&nets, &[vec![0.3]]).unwrap();
        let noise = CentralNoise::calibrate(1.0, 1e-6, 2).unwrap();
        let c = CentralNoiseHistogram::new(h, noise, 7).unwrap();
        let z = nets.decode(2, &[0.3]).unwrap();
        assert_eq!(c.frequency(&z), c.frequency(&z));
        assert_eq!(c.frequency(&z).fract(), 0.0);
    }
}
