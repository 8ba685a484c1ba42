//! Gaussian mixture datasets in the unit ball.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use dpkmeans::points::clip_to_ball;
use dpkmeans::rng::stream;
use dpkmeans::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub k_true: usize,
    pub n: usize,
    pub d: usize,
    /// Separation ratio; must exceed 2.
    pub r: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub centers: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    /// Generating component of every point.
    pub labels: Vec<usize>,
}

impl MixtureConfig {
    pub fn center_radius(&self) -> f64 {
        1.0 - 2.0 / self.r
    }

    /// Per-coordinate noise deviation, `(1/r) / sqrt(d)`.
    pub fn noise_std(&self) -> f64 {
        1.0 / self.r / (self.d as f64).sqrt()
    }
}

fn unit<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Centers uniform on the sphere of radius `1 - 2/r`, point `i` drawn around
/// center `i mod k`, and points outside the ball pulled back onto it.
pub fn generate_mixture(cfg: &MixtureConfig) -> Result<Mixture> {
    if cfg.k_true == 0 || cfg.n == 0 || cfg.d == 0 {
        return Err(Error::EmptyInput);
    }
    if !(cfg.r > 2.0 && cfg.r.is_finite()) {
        return Err(Error::InvalidParameter(format!("separation r = {} must exceed 2", cfg.r)));
    }
    let mut rc = stream(cfg.seed, "mixture_centers", 0);
    let rad = cfg.center_radius();
    let centers: Vec<Vec<f64>> = (0..cfg.k_true)
        .map(|_| unit(cfg.d, &mut rc).into_iter().map(|x| x * rad).collect())
        .collect();
    let sd = cfg.noise_std();
    let mut rp = stream(cfg.seed, "mixture_points", 0);
    let mut points = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let j = i % cfg.k_true;
        let mut x: Vec<f64> = centers[j]
            .iter()
            .map(|c| c + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rp))
            .collect();
        clip_to_ball(&mut x);
        points.push(x);
        labels.push(j);
    }
    Ok(Mixture {
        centers,
        points,
        labels,
    })
}
