//! Local-model randomizers: a one-bit frequency oracle, the ball
//! privatizer for unit vectors, and the bucketed vector summation built from
//! the two, plus their generalized versions in which each user holds one
//! bucket per slot.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::randomness::{Bucket, HashCoeffs, SharedRandomness};
use super::{FrequencyOracle, VectorSumOracle};
use crate::error::{Error, Result};
use crate::nets::NetPoint;
use crate::points::norm;

/// `(e^eps + 1) / (e^eps - 1)`.
pub fn hist_scale(eps: f64) -> f64 {
    let e = eps.exp();
    (e + 1.0) / (e - 1.0)
}

/// Probability of reporting the true sign, `e^eps / (e^eps + 1)`.
pub fn keep_probability(eps: f64) -> f64 {
    1.0 / (1.0 + (-eps).exp())
}

/// One user's report for bucket `y`: `Z_{y,u}` kept with probability
/// `e^eps/(e^eps+1)`, flipped otherwise.
pub fn explicit_hist_encode<R: Rng + ?Sized>(
    y: Bucket,
    user: u64,
    eps: f64,
    z: &SharedRandomness,
    rng: &mut R,
) -> i8 {
    let s = z.sign(y, user);
    if rng.random::<f64>() < keep_probability(eps) {
        s
    } else {
        -s
    }
}

/// Unbiased count of users holding `v`: `scale(eps) * sum_u y_u Z_{v,u}`,
/// where `reports[u]` is the report of user `u`.
pub fn explicit_hist_decode(reports: &[i8], v: Bucket, eps: f64, z: &SharedRandomness) -> f64 {
    let s: i64 = reports
        .iter()
        .enumerate()
        .map(|(u, &y)| (y * z.sign(v, u as u64)) as i64)
        .sum();
    hist_scale(eps) * s as f64
}

/// `E|u_1|` for `u` uniform on the unit sphere in `R^d`.
pub fn mean_abs_coordinate(d: usize) -> f64 {
    let (mut m, mut k) = if d % 2 == 1 {
        (1.0, 1)
    } else {
        (2.0 / std::f64::consts::PI, 2)
    };
    while k < d {
        m *= k as f64 / (k as f64 + 1.0);
        k += 2;
    }
    m
}

/// Output norm `B` of the ball privatizer, chosen so its output is unbiased.
pub fn djw_bound(d: usize, eps: f64) -> f64 {
    hist_scale(eps) / mean_abs_coordinate(d)
}

/// `c_B` in `B = c_B sqrt(d) / eps`.
pub fn djw_constant(d: usize, eps: f64) -> f64 {
    djw_bound(d, eps) * eps / (d as f64).sqrt()
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// eps-LDP unbiased estimate of `x` in the unit ball, of norm exactly `B`.
///
/// First rounds `x` to `+-x/|x|` (sign `+` with probability `(1+|x|)/2`),
/// then samples uniformly from the radius-`B` hemisphere on that side with
/// probability `e^eps/(e^eps+1)`, and from the opposite hemisphere otherwise.
pub fn djw_privatize<R: Rng + ?Sized>(x: &[f64], eps: f64, rng: &mut R) -> Result<Vec<f64>> {
    let d = x.len();
    if d == 0 {
        return Err(Error::EmptyInput);
    }
    let nx = norm(x);
    if !nx.is_finite() {
        return Err(Error::NonFinite);
    }
    if nx > 1.0 + 1e-9 {
        return Err(Error::OutsideBall(nx));
    }
    let nx = nx.min(1.0);
    let mut dir: Vec<f64> = if nx > 0.0 {
        x.iter().map(|v| v / norm(x)).collect()
    } else {
        random_unit(d, rng)
    };
    if rng.random::<f64>() >= (1.0 + nx) / 2.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
    }
    let toward = rng.random::<f64>() < keep_probability(eps);
    let mut u = random_unit(d, rng);
    let ip: f64 = u.iter().zip(&dir).map(|(a, b)| a * b).sum();
    if (ip > 0.0) != toward {
        for (a, b) in u.iter_mut().zip(&dir) {
            *a -= 2.0 * ip * b;
        }
    }
    let b = djw_bound(d, eps);
    let nu = norm(&u);
    Ok(u.into_iter().map(|v| v * b / nu).collect())
}

/// One user's vector report for bucket `y`: the privatized `Z_{y,u} x`.
pub fn explicit_hist_vector_encode<R: Rng + ?Sized>(
    x: &[f64],
    y: Bucket,
    user: u64,
    eps: f64,
    z: &SharedRandomness,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let s = z.sign(y, user) as f64;
    let signed: Vec<f64> = x.iter().map(|v| v * s).collect();
    djw_privatize(&signed, eps, rng)
}

/// Unbiased sum of the vectors of users holding `v`: `sum_u Z_{v,u} r_u`.
pub fn explicit_hist_vector_decode(reports: &[Vec<f64>], v: Bucket, z: &SharedRandomness) -> Vec<f64> {
    let d = reports.first().map(|r| r.len()).unwrap_or(0);
    let mut out = vec![0.0; d];
    for (u, r) in reports.iter().enumerate() {
        let s = z.sign(v, u as u64) as f64;
        for (o, x) in out.iter_mut().zip(r) {
            *o += s * x;
        }
    }
    out
}

/// Index of slot `slot` of user `user` when `slots` reports are sent per user.
pub fn virtual_user(user: u64, slot: usize, slots: usize) -> u64 {
    user * slots as u64 + slot as u64
}

/// Reports for one user holding one bucket per slot, each slot at
/// `eps / slots`.
pub fn generalized_hist_encode<R: Rng + ?Sized>(
    buckets: &[Bucket],
    user: u64,
    eps: f64,
    z: &SharedRandomness,
    rng: &mut R,
) -> Vec<i8> {
    let t = buckets.len();
    buckets
        .iter()
        .enumerate()
        .map(|(j, &y)| explicit_hist_encode(y, virtual_user(user, j, t), eps / t as f64, z, rng))
        .collect()
}

/// Generalized vector reports, each slot at `eps / slots`.
pub fn generalized_vector_encode<R: Rng + ?Sized>(
    x: &[f64],
    buckets: &[Bucket],
    user: u64,
    eps: f64,
    z: &SharedRandomness,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let t = buckets.len();
    buckets
        .iter()
        .enumerate()
        .map(|(j, &y)| explicit_hist_vector_encode(x, y, virtual_user(user, j, t), eps / t as f64, z, rng))
        .collect()
}

const CHUNK: usize = 4096;

/// Analyst side of the (generalized) one-bit histogram: every report is
/// treated as coming from its own virtual user.
#[derive(Debug, Clone)]
pub struct LocalHistogram {
    eps: f64,
    columns: Vec<HashCoeffs>,
    reports: Vec<i8>,
}

impl LocalHistogram {
    /// `reports[u]` is the report of virtual user `u`, made at privacy `eps`.
    pub fn new(reports: Vec<i8>, eps: f64, z: &SharedRandomness) -> Self {
        let users: Vec<u64> = (0..reports.len() as u64).collect();
        Self::with_users(reports, &users, eps, z)
    }

    /// `reports[i]` is the report of virtual user `users[i]`.
    pub fn with_users(reports: Vec<i8>, users: &[u64], eps: f64, z: &SharedRandomness) -> Self {
        assert_eq!(reports.len(), users.len());
        let columns = users.iter().map(|&u| z.column(u)).collect();
        LocalHistogram { eps, columns, reports }
    }

    pub fn estimate(&self, v: Bucket) -> f64 {
        let s: i64 = self
            .reports
            .par_chunks(CHUNK)
            .zip(self.columns.par_chunks(CHUNK))
            .map(|(r, c)| {
                r.iter()
                    .zip(c)
                    .map(|(&y, col)| (y * col.sign(v)) as i64)
                    .sum::<i64>()
            })
            .sum();
        hist_scale(self.eps) * s as f64
    }
}

impl FrequencyOracle for LocalHistogram {
    fn frequency(&self, z: &NetPoint) -> f64 {
        self.estimate(Bucket::of(z))
    }

    fn frequencies(&self, zs: &[NetPoint]) -> Vec<f64> {
        zs.par_iter().map(|z| self.frequency(z)).collect()
    }
}

/// Analyst side of the (generalized) vector summation.
#[derive(Debug, Clone)]
pub struct LocalVectorSums {
    dim: usize,
    columns: Vec<HashCoeffs>,
    /// Row-major, one row per virtual user.
    reports: Vec<f64>,
}

impl LocalVectorSums {
    pub fn new(dim: usize, reports: Vec<Vec<f64>>, z: &SharedRandomness) -> Result<Self> {
        let users: Vec<u64> = (0..reports.len() as u64).collect();
        Self::with_users(dim, reports, &users, z)
    }

    pub fn with_users(
        dim: usize,
        reports: Vec<Vec<f64>>,
        users: &[u64],
        z: &SharedRandomness,
    ) -> Result<Self> {
        if reports.len() != users.len() {
            return Err(Error::InvalidParameter(format!(
                "{} reports for {} users",
                reports.len(),
                users.len()
            )));
        }
        let mut flat = Vec::with_capacity(reports.len() * dim);
        for r in &reports {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let columns = users.iter().map(|&u| z.column(u)).collect();
        Ok(LocalVectorSums {
            dim,
            columns,
            reports: flat,
        })
    }

    /// `sum_u (sum_{v in vs} Z_{v,u}) r_u`, equal to summing the single-bucket
    /// estimates over `vs`.
    pub fn estimate_many(&self, vs: &[Bucket]) -> Vec<f64> {
        let d = self.dim;
        if d == 0 {
            return Vec::new();
        }
        let partial: Vec<Vec<f64>> = self
            .reports
            .par_chunks(CHUNK * d)
            .zip(self.columns.par_chunks(CHUNK))
            .map(|(rows, cols)| {
                let mut acc = vec![0.0; d];
                for (row, col) in rows.chunks_exact(d).zip(cols) {
                    let s: i64 = vs.iter().map(|&v| col.sign(v) as i64).sum();
                    if s != 0 {
                        let s = s as f64;
                        for (a, x) in acc.iter_mut().zip(row) {
                            *a += s * x;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; d];
        for p in partial {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x;
            }
        }
        out
    }
}

impl VectorSumOracle for LocalVectorSums {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector_sum(&self, z: &NetPoint) -> Vec<f64> {
        self.estimate_many(&[Bucket::of(z)])
    }

    fn vector_sum_many(&self, zs: &[NetPoint]) -> Vec<f64> {
        let vs: Vec<Bucket> = zs.iter().map(Bucket::of).collect();
        self.estimate_many(&vs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn likelihood_ratio_is_exactly_e_eps() {
        for eps in [0.1, 0.5, 1.0, 3.0] {
            let p = keep_probability(eps);
            assert!((p / (1.0 - p) - f64::exp(eps)).abs() < 1e-12 * f64::exp(eps));
        }
    }

    #[test]
    fn mean_abs_coordinate_small_cases() {
        assert_eq!(mean_abs_coordinate(1), 1.0);
        assert!((mean_abs_coordinate(2) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((mean_abs_coordinate(3) - 0.5).abs() < 1e-15);
        // Large d: approximately sqrt(2 / (pi d)).
        let d = 400;
        let approx = (2.0 / (std::f64::consts::PI * d as f64)).sqrt();
        assert!((mean_abs_coordinate(d) / approx - 1.0).abs() < 1e-2);
    }

    #[test]
    fn privatizer_has_norm_b() {
        let mut rng = stream(1, "t", 0);
        for d in [1, 2, 5, 30] {
            let b = djw_bound(d, 1.0);
            for _ in 0..50 {
                let x: Vec<f64> = (0..d).map(|i| if i == 0 { 0.6 } else { 0.0 }).collect();
                let z = djw_privatize(&x, 1.0, &mut rng).unwrap();
                assert!((norm(&z) / b - 1.0).abs() < 1e-9);
            }
        }
        assert!(djw_privatize(&[1.5], 1.0, &mut rng).is_err());
    }

    #[test]
    fn privatizer_is_unbiased_in_one_dim() {
        let mut rng = stream(2, "t", 0);
        let n = 200_000;
        let x = [0.3];
        let mean: f64 = (0..n).map(|_| djw_privatize(&x, 1.0, &mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        let sd = djw_bound(1, 1.0) / (n as f64).sqrt();
        assert!((mean - 0.3).abs() < 4.0 * sd, "{mean}");
    }

    #[test]
    fn histogram_recovers_counts() {
        let z = SharedRandomness::new(5);
        let mut rng = stream(3, "t", 0);
        let buckets = [Bucket(1), Bucket(2)];
        let n = 20_000;
        let reports: Vec<i8> = (0..n)
            .map(|u| explicit_hist_encode(buckets[(u % 4 == 0) as usize], u as u64, 2.0, &z, &mut rng))
            .collect();
        let f1 = explicit_hist_decode(&reports, Bucket(1), 2.0, &z);
        let f2 = explicit_hist_decode(&reports, Bucket(2), 2.0, &z);
        let sd = hist_scale(2.0) * (n as f64).sqrt();
        assert!((f1 - 15_000.0).abs() < 4.0 * sd);
        assert!((f2 - 5_000.0).abs() < 4.0 * sd);
        let h = LocalHistogram::new(reports, 2.0, &z);
        assert_eq!(h.estimate(Bucket(1)), f1);
    }

    #[test]
    fn vector_sums_batch_equals_sum_of_singles() {
        let z = SharedRandomness::new(9);
        let mut rng = stream(4, "t", 0);
        let reports: Vec<Vec<f64>> = (0..300)
            .map(|u| explicit_hist_vector_encode(&[0.5, -0.5], Bucket(u % 3), u, 1.0, &z, &mut rng).unwrap())
            .collect();
        let o = LocalVectorSums::new(2, reports.clone(), &z).unwrap();
        let vs = [Bucket(0), Bucket(1)];
        let batch = o.estimate_many(&vs);
        let a = explicit_hist_vector_decode(&reports, Bucket(0), &z);
        let b = explicit_hist_vector_decode(&reports, Bucket(1), &z);
        for i in 0..2 {
            assert!((batch[i] - (a[i] + b[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn generalized_reports_use_split_budget() {
        let z = SharedRandomness::new(1);
        let mut rng = stream(0, "t", 0);
        let r = generalized_hist_encode(&[Bucket(3), Bucket(4), Bucket(5)], 7, 3.0, &z, &mut rng);
        assert_eq!(r.len(), 3);
        assert_eq!(virtual_user(7, 2, 3), 23);
    }
}
