//! Weighted point sets, center sets, partitions and k-means costs.

use std::collections::HashMap;
use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A point in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Exact identity key (bit pattern, with -0.0 folded onto 0.0).
    pub fn key(&self) -> PointKey {
        PointKey(
            self.0
                .iter()
                .map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() })
                .collect(),
        )
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Hashable identity of a point; two points are the same support element
/// exactly when their coordinates are bitwise equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey(Vec<u64>);

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Project `v` onto the closed unit ball.
pub fn clip_to_ball(v: &mut [f64]) {
    let n = norm(v);
    if n > 1.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// A finite weighted multiset of points in R^d. Support order is insertion
/// order, which keeps every downstream computation deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedPointSet {
    dim: usize,
    points: Vec<Point>,
    weights: Vec<f64>,
    index: HashMap<PointKey, usize>,
}

impl WeightedPointSet {
    pub fn new(dim: usize) -> Self {
        WeightedPointSet {
            dim,
            ..Default::default()
        }
    }

    /// Build from parallel point/weight lists, merging duplicates.
    pub fn from_weighted(dim: usize, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let mut s = WeightedPointSet::new(dim);
        for (p, w) in points.into_iter().zip(weights) {
            s.add(p, w)?;
        }
        Ok(s)
    }

    /// Build with unit weights.
    pub fn from_points(dim: usize, points: Vec<Point>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::from_weighted(dim, points, w)
    }

    /// Add `w` to the weight of `p`, inserting it if new.
    pub fn add(&mut self, p: Point, w: f64) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.dim(),
            });
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidWeight(w));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let key = p.key();
        match self.index.get(&key) {
            Some(&i) => self.weights[i] += w,
            None => {
                self.index.insert(key, self.points.len());
                self.points.push(p);
                self.weights.push(w);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support size.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Weight of `p`, zero if `p` is not in the support.
    pub fn weight_of(&self, p: &Point) -> f64 {
        self.index_of(p).map(|i| self.weights[i]).unwrap_or(0.0)
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.index.get(&p.key()).copied()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// An ordered set of k centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    pub centers: Vec<Point>,
}

impl CenterSet {
    pub fn new(centers: Vec<Point>) -> Self {
        CenterSet { centers }
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map(|c| c.dim()).unwrap_or(0)
    }

    /// Index of the nearest center, ties to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.centers.iter().enumerate() {
            let d = sq_dist(x, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

/// Cluster labels in `0..k`, aligned with the support order of a set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn new(k: usize, labels: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidParameter(format!("label {bad} >= k = {k}")));
        }
        Ok(Partition { k, labels })
    }

    /// Nearest-center partition of `set`.
    pub fn nearest(set: &WeightedPointSet, centers: &CenterSet) -> Self {
        let labels = set.points().iter().map(|p| centers.nearest(p).0).collect();
        Partition {
            k: centers.k(),
            labels,
        }
    }
}

fn check_centers(set: &WeightedPointSet, centers: &CenterSet) -> Result<()> {
    if centers.k() == 0 {
        return Err(Error::InvalidK {
            k: 0,
            support: set.len(),
        });
    }
    for c in &centers.centers {
        if c.dim() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: c.dim(),
            });
        }
    }
    Ok(())
}

fn check_partition(set: &WeightedPointSet, partition: &Partition) -> Result<()> {
    if partition.labels.len() != set.len() {
        return Err(Error::InvalidParameter(format!(
            "partition has {} labels for a support of {}",
            partition.labels.len(),
            set.len()
        )));
    }
    Ok(())
}

/// `sum_x w(x) min_c |x - c|^2`.
pub fn cost(set: &WeightedPointSet, centers: &CenterSet) -> Result<f64> {
    check_centers(set, centers)?;
    Ok(set.iter().map(|(p, w)| w * centers.nearest(p).1).sum())
}

/// `sum_x w(x) |x - c_{phi(x)}|^2`.
pub fn partition_cost(
    set: &WeightedPointSet,
    partition: &Partition,
    centers: &CenterSet,
) -> Result<f64> {
    check_centers(set, centers)?;
    check_partition(set, partition)?;
    if partition.k != centers.k() {
        return Err(Error::InvalidParameter(format!(
            "partition has k = {} but {} centers",
            partition.k,
            centers.k()
        )));
    }
    Ok(set
        .iter()
        .zip(&partition.labels)
        .map(|((p, w), &j)| w * sq_dist(p, &centers.centers[j]))
        .sum())
}

/// Weighted mean of the whole set.
pub fn centroid(set: &WeightedPointSet) -> Result<Point> {
    let total = set.total_weight();
    if set.is_empty() || total <= 0.0 {
        return Err(Error::EmptyInput);
    }
    let mut mu = vec![0.0; set.dim()];
    for (p, w) in set.iter() {
        for (m, x) in mu.iter_mut().zip(p.iter()) {
            *m += w * x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= total);
    Ok(Point(mu))
}

/// Per-part weighted means; parts of zero weight keep `None`.
pub fn partition_means(set: &WeightedPointSet, partition: &Partition) -> Result<Vec<Option<Point>>> {
    check_partition(set, partition)?;
    let mut sums = vec![vec![0.0; set.dim()]; partition.k];
    let mut mass = vec![0.0; partition.k];
    for ((p, w), &j) in set.iter().zip(&partition.labels) {
        mass[j] += w;
        for (s, x) in sums[j].iter_mut().zip(p.iter()) {
            *s += w * x;
        }
    }
    Ok(sums
        .into_iter()
        .zip(mass)
        .map(|(mut s, m)| {
            if m > 0.0 {
                s.iter_mut().for_each(|v| *v /= m);
                Some(Point(s))
            } else {
                None
            }
        })
        .collect())
}

/// Cost of a partition with each part served by its own weighted mean.
pub fn partition_opt_cost(set: &WeightedPointSet, partition: &Partition) -> Result<f64> {
    let means = partition_means(set, partition)?;
    Ok(set
        .iter()
        .zip(&partition.labels)
        .map(|((p, w), &j)| match &means[j] {
            Some(mu) => w * sq_dist(p, mu),
            None => 0.0,
        })
        .sum())
}

/// Sum of the `m` smallest values.
pub fn bottom_m(values: &[f64], m: usize) -> Result<f64> {
    if m > values.len() {
        return Err(Error::InvalidParameter(format!(
            "bottom_{m} of {} values",
            values.len()
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[..m].iter().sum())
}

fn sample_index<R: Rng>(rng: &mut R, scores: &[f64]) -> usize {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return rng.random_range(0..scores.len());
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > 0.0 {
            last = i;
            if u < *s {
                return i;
            }
            u -= s;
        }
    }
    last
}

/// Weighted k-means++ seeding followed by `lloyd_iters` weighted Lloyd steps.
pub fn kmeans_pp(set: &WeightedPointSet, k: usize, seed: u64, lloyd_iters: usize) -> Result<CenterSet> {
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidK {
            k,
            support: set.len(),
        });
    }
    let mut rng = rng::stream(seed, "kmeans_pp", 0);
    let n = set.len();
    let mut centers: Vec<Point> = Vec::with_capacity(k);
    centers.push(set.point(sample_index(&mut rng, set.weights())).clone());
    let mut d2: Vec<f64> = set.points().iter().map(|p| sq_dist(p, &centers[0])).collect();
    let mut scores = vec![0.0; n];
    while centers.len() < k {
        for i in 0..n {
            scores[i] = set.weight(i) * d2[i];
        }
        let idx = if scores.iter().any(|s| *s > 0.0) {
            sample_index(&mut rng, &scores)
        } else {
            sample_index(&mut rng, set.weights())
        };
        let c = set.point(idx).clone();
        for (i, p) in set.points().iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    let mut cs = CenterSet::new(centers);
    for _ in 0..lloyd_iters {
        let part = Partition::nearest(set, &cs);
        let means = partition_means(set, &part)?;
        let mut moved = false;
        for (c, m) in cs.centers.iter_mut().zip(means) {
            if let Some(m) = m {
                if m != *c {
                    moved = true;
                    *c = m;
                }
            }
        }
        if !moved {
            break;
        }
    }
    Ok(cs)
}

/// Best of `restarts` independent k-means++ runs by cost.
pub fn kmeans_pp_best_of(
    set: &WeightedPointSet,
    k: usize,
    seed: u64,
    lloyd_iters: usize,
    restarts: usize,
) -> Result<CenterSet> {
    let mut best: Option<(f64, CenterSet)> = None;
    for r in 0..restarts.max(1) {
        let cs = kmeans_pp(set, k, rng::derive_seed(seed, "restart", r as u64), lloyd_iters)?;
        let c = cost(set, &cs)?;
        if best.as_ref().map(|(b, _)| c < *b).unwrap_or(true) {
            best = Some((c, cs));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// A non-private clustering routine run on a coreset.
pub trait Clusterer {
    fn cluster(&self, set: &WeightedPointSet, k: usize) -> Result<CenterSet>;
}

/// k-means++ with Lloyd refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansPlusPlus {
    pub seed: u64,
    pub lloyd_iters: usize,
    pub restarts: usize,
}

impl Default for KMeansPlusPlus {
    fn default() -> Self {
        KMeansPlusPlus {
            seed: 0,
            lloyd_iters: 25,
            restarts: 5,
        }
    }
}

impl Clusterer for KMeansPlusPlus {
    fn cluster(&self, set: &WeightedPointSet, k: usize) -> Result<CenterSet> {
        kmeans_pp_best_of(set, k, self.seed, self.lloyd_iters, self.restarts)
    }
}

/// Number of k-subsets of an m-set, saturating.
pub fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul((m - i) as u128) / (i as u128 + 1);
    }
    r
}

/// Call `f` on every k-subset of `0..m` in lexicographic order.
pub fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Upper limit on the number of center sets `opt_bruteforce` will try.
pub const BRUTEFORCE_LIMIT: u128 = 20_000_000;

/// Exact minimum of `cost(set, C)` over all k-subsets `C` of `candidates`.
pub fn opt_bruteforce(
    set: &WeightedPointSet,
    k: usize,
    candidates: &[Point],
) -> Result<(f64, CenterSet)> {
    if set.is_empty() || candidates.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > candidates.len() {
        return Err(Error::InvalidK {
            k,
            support: candidates.len(),
        });
    }
    let count = binomial(candidates.len(), k);
    if count > BRUTEFORCE_LIMIT {
        return Err(Error::SearchTooLarge(count));
    }
    // d[c][i] = squared distance from candidate c to support point i.
    let d: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| {
            if c.dim() != set.dim() {
                return Err(Error::DimensionMismatch {
                    expected: set.dim(),
                    got: c.dim(),
                });
            }
            Ok(set.points().iter().map(|p| sq_dist(p, c)).collect())
        })
        .collect::<Result<_>>()?;
    let mut best = (f64::INFINITY, Vec::new());
    for_each_combination(candidates.len(), k, |idx| {
        let mut total = 0.0;
        for i in 0..set.len() {
            let m = idx.iter().map(|&c| d[c][i]).fold(f64::INFINITY, f64::min);
            total += set.weight(i) * m;
            if total >= best.0 {
                return;
            }
        }
        best = (total, idx.to_vec());
    });
    let centers = best.1.iter().map(|&c| candidates[c].clone()).collect();
    Ok((best.0, CenterSet::new(centers)))
}
