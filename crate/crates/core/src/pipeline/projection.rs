//! Random projection onto a `d'`-dimensional subspace.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// `d' x d` matrix with orthonormal rows. Applying it gives the coordinates
/// of the orthogonal projection in a basis of the subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    d: usize,
    rows: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Projection {
    /// Gaussian rows orthonormalized by Gram-Schmidt, each projection pass
    /// run twice.
    pub fn new(d: usize, d_prime: usize, seed: u64) -> Result<Self> {
        if d_prime == 0 || d_prime > d {
            return Err(Error::InvalidParameter(format!("projected dimension {d_prime} not in 1..={d}")));
        }
        let mut r = rng::stream(seed, "projection", 0);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d_prime);
        while rows.len() < d_prime {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
            let n0 = dot(&v, &v).sqrt();
            for _ in 0..2 {
                for q in &rows {
                    let c = dot(&v, q);
                    for (a, b) in v.iter_mut().zip(q) {
                        *a -= c * b;
                    }
                }
            }
            let n = dot(&v, &v).sqrt();
            // A draw nearly inside the span so far is redrawn.
            if n > 1e-6 * n0 {
                rows.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        Ok(Projection { d, rows })
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(self.rows.iter().map(|r| dot(r, x)).collect())
    }

    /// `max |<p_i, p_j> - [i == j]|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for (i, a) in self.rows.iter().enumerate() {
            for (j, b) in self.rows.iter().enumerate() {
                let t = if i == j { 1.0 } else { 0.0 };
                e = e.max((dot(a, b) - t).abs());
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_orthonormal() {
        for (d, dp) in [(1, 1), (5, 2), (20, 20), (100, 7)] {
            let p = Projection::new(d, dp, 3).unwrap();
            assert!(p.orthonormality_error() < 1e-9);
        }
    }

    #[test]
    fn projection_is_a_contraction() {
        let p = Projection::new(10, 3, 1).unwrap();
        let x: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) / 10.0).collect();
        let y = p.apply(&x).unwrap();
        assert!(dot(&y, &y) <= dot(&x, &x) + 1e-12);
        let full = Projection::new(4, 4, 1).unwrap();
        let z = full.apply(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((dot(&z, &z) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn seeded() {
        assert_eq!(Projection::new(6, 2, 9).unwrap(), Projection::new(6, 2, 9).unwrap());
        assert_ne!(Projection::new(6, 2, 9).unwrap(), Projection::new(6, 2, 10).unwrap());
        assert!(Projection::new(3, 4, 0).is_err());
    }
}
