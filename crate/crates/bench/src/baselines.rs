//! Reference arms: the origin as the only center, and k-means++ on
//! individually noised points.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dpkmeans::pipeline::{as_weighted, default_clusterer, normalized_objective};
use dpkmeans::points::{clip_to_ball, CenterSet, Clusterer, Point};
use dpkmeans::rng::stream;
use dpkmeans::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Trivial,
    Naive,
    Nonprivate,
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(Arm::Trivial),
            "naive" => Ok(Arm::Naive),
            "nonprivate" => Ok(Arm::Nonprivate),
            _ => Err(Error::InvalidParameter(format!("unknown baseline {s:?}"))),
        }
    }
}

/// Normalized objective of the single center at the origin: the mean
/// squared norm.
pub fn trivial_objective(data: &[Vec<f64>]) -> Result<f64> {
    let d = data.first().map(|x| x.len()).ok_or(Error::EmptyInput)?;
    normalized_objective(data, &CenterSet::new(vec![Point::zeros(d)]))
}

/// Per-coordinate Laplace noise of scale `2 sqrt(d) / eps`, the L1 diameter
/// of the ball over `eps`; then k-means++ on the noisy points, centers
/// clipped to the ball.
pub fn naive_centers(data: &[Vec<f64>], k: usize, eps: f64, seed: u64) -> Result<CenterSet> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon = {eps}")));
    }
    let d = data.first().map(|x| x.len()).ok_or(Error::EmptyInput)?;
    let b = 2.0 * (d as f64).sqrt() / eps;
    let noisy: Vec<Vec<f64>> = data
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = stream(seed, "naive_noise", i as u64);
            x.iter()
                .map(|v| {
                    let e: f64 = Exp1.sample(&mut r);
                    let s = if rand::Rng::random::<bool>(&mut r) { 1.0 } else { -1.0 };
                    v + s * b * e
                })
                .collect()
        })
        .collect();
    let set = as_weighted(&noisy)?;
    let mut c = default_clusterer(seed).cluster(&set, k)?;
    for p in c.centers.iter_mut() {
        clip_to_ball(&mut p.0);
    }
    Ok(c)
}

pub fn naive_objective(data: &[Vec<f64>], k: usize, eps: f64, seed: u64) -> Result<f64> {
    normalized_objective(data, &naive_centers(data, k, eps, seed)?)
}

/// k-means++ on the raw data.
pub fn nonprivate_centers(data: &[Vec<f64>], k: usize, seed: u64) -> Result<CenterSet> {
    default_clusterer(seed).cluster(&as_weighted(data)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{generate_mixture, MixtureConfig};

    #[test]
    fn trivial_is_mean_square_norm() {
        let data = vec![vec![0.6, 0.0], vec![0.0, 0.8]];
        assert!((trivial_objective(&data).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn naive_is_no_better_than_trivial_at_small_n() {
        let m = generate_mixture(&MixtureConfig {
            k_true: 4,
            n: 2000,
            d: 20,
            r: 100.0,
            seed: 1,
        })
        .unwrap();
        let t = trivial_objective(&m.points).unwrap();
        let nv = naive_objective(&m.points, 4, 1.0, 3).unwrap();
        let np = normalized_objective(&m.points, &nonprivate_centers(&m.points, 4, 3).unwrap()).unwrap();
        assert!(np < 0.1 * t);
        assert!(nv > 0.5 * t, "naive {nv} trivial {t}");
    }

    #[test]
    fn arm_names() {
        assert_eq!("naive".parse::<Arm>().unwrap(), Arm::Naive);
        assert!("laplace".parse::<Arm>().is_err());
    }
}
