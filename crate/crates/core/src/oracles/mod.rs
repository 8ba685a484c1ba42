//! Private frequency and vector-sum oracles over net-point buckets.
//!
//! `local` holds the local-model randomizers, `shuffle` the shuffle-model
//! vector summation, `exact` the noiseless references and a central-noise
//! histogram, and `discrete_gaussian` the exact integer Gaussian sampler.

pub mod discrete_gaussian;
pub mod exact;
pub mod local;
pub mod randomness;
pub mod shuffle;
pub mod wire;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::NetPoint;

pub use randomness::{Bucket, SharedRandomness};

/// Estimates how many users hold a bucket.
pub trait FrequencyOracle: Sync {
    fn frequency(&self, z: &NetPoint) -> f64;

    fn frequencies(&self, zs: &[NetPoint]) -> Vec<f64> {
        zs.par_iter().map(|z| self.frequency(z)).collect()
    }
}

impl<F: Fn(&NetPoint) -> f64 + Sync> FrequencyOracle for F {
    fn frequency(&self, z: &NetPoint) -> f64 {
        self(z)
    }
}

/// Estimates the sum of the vectors of users holding a bucket.
pub trait VectorSumOracle: Sync {
    fn dim(&self) -> usize;

    fn vector_sum(&self, z: &NetPoint) -> Vec<f64>;

    /// Sum of `vector_sum` over a set of buckets.
    fn vector_sum_many(&self, zs: &[NetPoint]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for z in zs {
            for (o, v) in out.iter_mut().zip(self.vector_sum(z)) {
                *o += v;
            }
        }
        out
    }
}

/// Privacy budget of one oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub epsilon: f64,
    pub delta: f64,
}

impl Budget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("delta = {delta} not in [0, 1)")));
        }
        Ok(Budget { epsilon, delta })
    }

    /// Budget of each of `t` parallel slots under basic composition.
    pub fn split(&self, t: usize) -> Budget {
        Budget {
            epsilon: self.epsilon / t as f64,
            delta: self.delta / t as f64,
        }
    }
}
