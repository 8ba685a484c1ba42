//! Exact sampling from the discrete Gaussian `N_Z(0, sigma^2)`, with
//! `P[x] proportional to exp(-x^2 / (2 sigma^2))` on the integers.
//!
//! Follows the rejection scheme of Canonne, Kamath and Steinke: a discrete
//! Laplace proposal of integer scale `t = floor(sigma) + 1`, accepted with
//! probability `exp(-(|y| - sigma^2/t)^2 / (2 sigma^2))`. All Bernoulli
//! draws use integer arithmetic on a rational `sigma^2`.

use rand::Rng;

use crate::error::{Error, Result};

/// Denominator used when converting a float variance to a rational.
pub const VARIANCE_DENOMINATOR: u128 = 1 << 16;

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// `sigma^2 = num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variance {
    pub num: u128,
    pub den: u128,
}

impl Variance {
    pub fn new(num: u128, den: u128) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(Variance {
            num: num / g,
            den: den / g,
        })
    }

    /// Rational approximation of `sigma^2` with denominator `2^16`.
    pub fn from_sigma(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) || sigma > 1e9 {
            return Err(Error::InvalidParameter(format!("sigma = {sigma}")));
        }
        let num = (sigma * sigma * VARIANCE_DENOMINATOR as f64).round() as u128;
        Self::new(num, VARIANCE_DENOMINATOR)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(sqrt(num / den))`.
    fn floor_sqrt(&self) -> u128 {
        let mut s = (self.as_f64().sqrt()) as u128;
        while s > 0 && s * s * self.den > self.num {
            s -= 1;
        }
        while (s + 1) * (s + 1) * self.den <= self.num {
            s += 1;
        }
        s
    }
}

/// Bernoulli(num / den).
fn bernoulli<R: Rng + ?Sized>(num: u128, den: u128, rng: &mut R) -> bool {
    rng.random_range(0..den) < num
}

/// Bernoulli(exp(-num/den)) for `0 <= num/den <= 1`.
fn bernoulli_exp_unit<R: Rng + ?Sized>(num: u128, den: u128, rng: &mut R) -> bool {
    let mut k: u128 = 1;
    loop {
        let Some(dk) = den.checked_mul(k) else {
            break;
        };
        if bernoulli(num, dk, rng) {
            k += 1;
        } else {
            break;
        }
    }
    k % 2 == 1
}

/// Bernoulli(exp(-num/den)) for any `num/den >= 0`.
pub fn bernoulli_exp<R: Rng + ?Sized>(mut num: u128, den: u128, rng: &mut R) -> bool {
    while num > den {
        if !bernoulli_exp_unit(1, 1, rng) {
            return false;
        }
        num -= den;
    }
    bernoulli_exp_unit(num, den, rng)
}

/// Discrete Laplace with `P[x] proportional to exp(-|x| / t)`.
pub fn discrete_laplace<R: Rng + ?Sized>(t: u128, rng: &mut R) -> i128 {
    assert!(t >= 1);
    loop {
        let u = rng.random_range(0..t);
        if !bernoulli_exp(u, t, rng) {
            continue;
        }
        let mut v: u128 = 0;
        while bernoulli_exp(1, 1, rng) {
            v += 1;
        }
        let x = u + t * v;
        let neg = rng.random::<bool>();
        if neg && x == 0 {
            continue;
        }
        return if neg { -(x as i128) } else { x as i128 };
    }
}

/// One exact draw from `N_Z(0, sigma^2)`.
pub fn sample<R: Rng + ?Sized>(var: Variance, rng: &mut R) -> i64 {
    if var.num == 0 {
        return 0;
    }
    let t = var.floor_sqrt() + 1;
    let (a, b) = (var.num, var.den);
    loop {
        let y = discrete_laplace(t, rng);
        let ay = y.unsigned_abs();
        // Exponent (|y| - a/(b t))^2 / (2 a / b) = (|y| b t - a)^2 / (2 a b t^2).
        let Some(ybt) = ay.checked_mul(b).and_then(|v| v.checked_mul(t)) else {
            continue;
        };
        let diff = ybt.abs_diff(a);
        let num = diff.checked_mul(diff);
        let den = a
            .checked_mul(b)
            .and_then(|v| v.checked_mul(t))
            .and_then(|v| v.checked_mul(t))
            .and_then(|v| v.checked_mul(2));
        // Overflow needs |y| beyond 2^40 sigma, where acceptance is nil.
        let (Some(num), Some(den)) = (num, den) else {
            continue;
        };
        if bernoulli_exp(num, den, rng) {
            return y as i64;
        }
    }
}

/// Convenience wrapper taking `sigma` as a float.
pub fn sample_sigma<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Result<i64> {
    Ok(sample(Variance::from_sigma(sigma)?, rng))
}

/// `sum_x x^2 exp(-x^2/(2 s^2)) / sum_x exp(-x^2/(2 s^2))`, computed by
/// direct summation; the exact variance of `N_Z(0, s^2)`.
pub fn exact_variance(sigma: f64) -> f64 {
    let lim = (sigma * 40.0).ceil() as i64 + 5;
    let mut z = 0.0;
    let mut m2 = 0.0;
    for x in -lim..=lim {
        let w = (-(x as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        z += w;
        m2 += (x as f64).powi(2) * w;
    }
    m2 / z
}

/// Probability mass `P[X = x]` of `N_Z(0, sigma^2)`.
pub fn pmf(sigma: f64, x: i64) -> f64 {
    let lim = (sigma * 40.0).ceil() as i64 + 5;
    let z: f64 = (-lim..=lim)
        .map(|y| (-(y as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .sum();
    (-(x as f64).powi(2) / (2.0 * sigma * sigma)).exp() / z
}
