//! Generalized Monge transport cost between weighted point sets, and the
//! coreset checks built on it.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{
    binomial, cost, for_each_combination, opt_bruteforce, sq_dist, CenterSet, Point, PointKey,
    WeightedPointSet,
};
use crate::rng;

/// Image of each support point of the source set, in support order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub images: Vec<Point>,
}

/// Largest number of maps `mt_bruteforce` will enumerate.
pub const MT_BRUTEFORCE_LIMIT: f64 = 1.0e6;

/// Push-forward weights `w_S(Psi^{-1}(x))`, keyed by image point.
fn pushforward(psi: &TransportMap, s: &WeightedPointSet) -> HashMap<PointKey, f64> {
    let mut push: HashMap<PointKey, f64> = HashMap::new();
    for (img, w) in psi.images.iter().zip(s.weights()) {
        *push.entry(img.key()).or_insert(0.0) += w;
    }
    push
}

/// `mt(Psi, S, S') = sum_y w_S(y) |Psi(y) - y|^2 + sum_x |w_S(Psi^{-1}(x)) - w_S'(x)|`.
pub fn mt_with_map(psi: &TransportMap, s: &WeightedPointSet, s2: &WeightedPointSet) -> Result<f64> {
    if psi.images.len() != s.len() {
        return Err(Error::InvalidParameter(format!(
            "map has {} images for a support of {}",
            psi.images.len(),
            s.len()
        )));
    }
    if s.dim() != s2.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: s2.dim(),
        });
    }
    let mut movement = 0.0;
    for ((y, w), img) in s.iter().zip(&psi.images) {
        if img.dim() != s.dim() {
            return Err(Error::DimensionMismatch {
                expected: s.dim(),
                got: img.dim(),
            });
        }
        movement += w * sq_dist(y, img);
    }
    let push = pushforward(psi, s);
    let mut l1 = 0.0;
    for (x, w2) in s2.iter() {
        l1 += (push.get(&x.key()).copied().unwrap_or(0.0) - w2).abs();
    }
    // Images off the support of S' pay their full mass; iterate in map order
    // so the sum is deterministic.
    let mut seen: HashMap<PointKey, ()> = HashMap::new();
    for img in &psi.images {
        let key = img.key();
        if s2.index_of(img).is_none() && seen.insert(key.clone(), ()).is_none() {
            l1 += push[&key];
        }
    }
    Ok(movement + l1)
}

/// Exact `mt(S, S') = min_Psi mt(Psi, S, S')`.
///
/// Each source point either moves onto a support point of `S'` or stays put;
/// moving onto any other point costs movement without reducing the mass term,
/// so this search is exhaustive.
pub fn mt_bruteforce(s: &WeightedPointSet, s2: &WeightedPointSet) -> Result<(f64, TransportMap)> {
    if s.dim() != s2.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: s2.dim(),
        });
    }
    let space = (s2.len() as f64 + 1.0).powi(s.len() as i32);
    if space > MT_BRUTEFORCE_LIMIT {
        return Err(Error::SearchTooLarge(space as u128));
    }
    let m = s2.len();
    // cost[i][j]: movement of source i onto target j; j == m means "stay".
    let move_cost: Vec<Vec<f64>> = s
        .iter()
        .map(|(y, w)| s2.points().iter().map(|x| w * sq_dist(y, x)).collect())
        .collect();
    let in_target: Vec<Option<usize>> = s.points().iter().map(|y| s2.index_of(y)).collect();

    struct Search<'a> {
        s: &'a WeightedPointSet,
        s2: &'a WeightedPointSet,
        move_cost: Vec<Vec<f64>>,
        in_target: Vec<Option<usize>>,
        push: Vec<f64>,
        choice: Vec<usize>,
        best: f64,
        best_choice: Vec<usize>,
    }

    impl Search<'_> {
        fn go(&mut self, i: usize, moved: f64, stay_mass: f64) {
            if moved + stay_mass >= self.best {
                return;
            }
            let m = self.s2.len();
            if i == self.s.len() {
                // Recomputed from the choices: incremental updates would
                // accumulate rounding when backtracking.
                self.push.iter_mut().for_each(|p| *p = 0.0);
                for (k, &j) in self.choice.iter().enumerate() {
                    if j < m {
                        self.push[j] += self.s.weight(k);
                    }
                }
                let l1: f64 = self
                    .push
                    .iter()
                    .zip(self.s2.weights())
                    .map(|(p, w)| (p - w).abs())
                    .sum();
                let total = moved + stay_mass + l1;
                if total < self.best {
                    self.best = total;
                    self.best_choice = self.choice.clone();
                }
                return;
            }
            let w = self.s.weight(i);
            for j in 0..m {
                self.choice[i] = j;
                let c = self.move_cost[i][j];
                self.go(i + 1, moved + c, stay_mass);
            }
            if self.in_target[i].is_none() {
                self.choice[i] = m;
                self.go(i + 1, moved, stay_mass + w);
            }
        }
    }

    let mut search = Search {
        s,
        s2,
        move_cost,
        in_target,
        push: vec![0.0; m],
        choice: vec![m; s.len()],
        best: f64::INFINITY,
        best_choice: vec![m; s.len()],
    };
    search.go(0, 0.0, 0.0);
    let images = search
        .best_choice
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            if j == m {
                s.point(i).clone()
            } else {
                s2.point(j).clone()
            }
        })
        .collect();
    Ok((search.best, TransportMap { images }))
}

/// Both sides of the two transport inequalities for one `(Psi, phi, C, xi)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostChangeReport {
    pub mt: f64,
    /// `cost_S(phi o Psi, C)` against `(1+xi) cost_S'(phi, C) + 4(1+1/xi) mt`.
    pub first: (f64, f64),
    /// `cost_S'(C)` against `(1+xi) cost_S(C) + 4(1+1/xi) mt`.
    pub second: (f64, f64),
}

impl CostChangeReport {
    pub fn holds(&self) -> bool {
        let tol = |r: f64| 1e-9 * (1.0 + r.abs());
        self.first.0 <= self.first.1 + tol(self.first.1)
            && self.second.0 <= self.second.1 + tol(self.second.1)
    }
}

/// Evaluate both transport inequalities. `phi` labels arbitrary points with
/// a center index. Points and centers are assumed to lie in the unit ball.
pub fn cost_change_check(
    s: &WeightedPointSet,
    s2: &WeightedPointSet,
    psi: &TransportMap,
    phi: &dyn Fn(&[f64]) -> usize,
    centers: &CenterSet,
    xi: f64,
) -> Result<CostChangeReport> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::InvalidParameter(format!("xi = {xi} not in (0, 1]")));
    }
    let mt = mt_with_map(psi, s, s2)?;
    let c = |x: &[f64]| &centers.centers[phi(x) % centers.k()];
    let lhs1: f64 = s
        .iter()
        .zip(&psi.images)
        .map(|((y, w), img)| w * sq_dist(y, c(img)))
        .sum();
    let cost2_phi: f64 = s2.iter().map(|(x, w)| w * sq_dist(x, c(x))).sum();
    let slack = 4.0 * (1.0 + 1.0 / xi) * mt;
    let rhs1 = (1.0 + xi) * cost2_phi + slack;
    let lhs2 = cost(s2, centers)?;
    let rhs2 = (1.0 + xi) * cost(s, centers)? + slack;
    Ok(CostChangeReport {
        mt,
        first: (lhs1, rhs1),
        second: (lhs2, rhs2),
    })
}

/// A center set on which a coreset inequality failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoresetWitness {
    pub centers: CenterSet,
    pub cost_s: f64,
    pub cost_s2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoresetReport {
    pub passed: bool,
    pub checked: usize,
    /// Largest `|cost_S' - cost_S| / cost_S` seen.
    pub gamma_observed: f64,
    /// Largest additive excess `|cost_S' - cost_S| - gamma cost_S` seen.
    pub t_observed: f64,
    pub witnesses: Vec<CoresetWitness>,
}

/// Check `(1-gamma) cost_S(C) - t <= cost_S'(C) <= (1+gamma) cost_S(C) + t`
/// on every candidate center set.
pub fn coreset_check(
    s: &WeightedPointSet,
    s2: &WeightedPointSet,
    gamma: f64,
    t: f64,
    candidates: &[CenterSet],
) -> Result<CoresetReport> {
    use rayon::prelude::*;
    let evals: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|c| Ok((cost(s, c)?, cost(s2, c)?)))
        .collect::<Result<_>>()?;
    let mut report = CoresetReport {
        passed: true,
        checked: candidates.len(),
        gamma_observed: 0.0,
        t_observed: 0.0,
        witnesses: Vec::new(),
    };
    for (c, &(a, b)) in candidates.iter().zip(&evals) {
        let tol = 1e-9 * (1.0 + a.abs() + t.abs());
        let gap = (b - a).abs();
        if a > 0.0 {
            report.gamma_observed = report.gamma_observed.max(gap / a);
        }
        report.t_observed = report.t_observed.max(gap - gamma * a);
        if b < (1.0 - gamma) * a - t - tol || b > (1.0 + gamma) * a + t + tol {
            report.passed = false;
            if report.witnesses.len() < 16 {
                report.witnesses.push(CoresetWitness {
                    centers: c.clone(),
                    cost_s: a,
                    cost_s2: b,
                });
            }
        }
    }
    report.t_observed = report.t_observed.max(0.0);
    Ok(report)
}

/// Axis grid of the given pitch, restricted to the closed unit ball.
pub fn ball_grid(dim: usize, pitch: f64) -> Vec<Point> {
    let steps = (1.0 / pitch).floor() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-steps; dim];
    loop {
        let p: Vec<f64> = idx.iter().map(|&i| i as f64 * pitch).collect();
        if crate::points::norm(&p) <= 1.0 + 1e-12 {
            out.push(Point(p));
        }
        let mut j = 0;
        loop {
            if j == dim {
                return out;
            }
            idx[j] += 1;
            if idx[j] <= steps {
                break;
            }
            idx[j] = -steps;
            j += 1;
        }
    }
}

/// Candidate center sets for coreset checks: every k-subset of an axis grid
/// of the given pitch (only for `d <= 3`), plus k-subsets of the union of
/// the two supports (all of them if at most `max_support_sets`, otherwise a
/// seeded sample of that many).
pub fn coreset_candidates(
    s: &WeightedPointSet,
    s2: &WeightedPointSet,
    k: usize,
    pitch: f64,
    max_support_sets: usize,
    seed: u64,
) -> Vec<CenterSet> {
    let mut out = Vec::new();
    if s.dim() <= 3 {
        let grid = ball_grid(s.dim(), pitch);
        for_each_combination(grid.len(), k, |idx| {
            out.push(CenterSet::new(idx.iter().map(|&i| grid[i].clone()).collect()));
        });
    }
    let mut union: Vec<Point> = s.points().to_vec();
    for p in s2.points() {
        if s.index_of(p).is_none() {
            union.push(p.clone());
        }
    }
    if binomial(union.len(), k) <= max_support_sets as u128 {
        for_each_combination(union.len(), k, |idx| {
            out.push(CenterSet::new(idx.iter().map(|&i| union[i].clone()).collect()));
        });
    } else if union.len() >= k {
        let mut r = rng::stream(seed, "coreset_candidates", 0);
        let mut order: Vec<usize> = (0..union.len()).collect();
        for _ in 0..max_support_sets {
            order.shuffle(&mut r);
            out.push(CenterSet::new(order[..k].iter().map(|&i| union[i].clone()).collect()));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportBoundReport {
    pub mt: f64,
    /// Certified lower bound on the optimal k-means cost of `S`.
    pub opt_lower: f64,
    pub premise: bool,
    pub coreset: Option<CoresetReport>,
}

impl TransportBoundReport {
    pub fn passed(&self) -> bool {
        !self.premise || self.coreset.as_ref().map(|c| c.passed).unwrap_or(false)
    }
}

/// If `mt(S,S') <= xi / (8(1+2/xi)) opt + t` then `S'` must be a
/// `(xi, 4(1+2/xi) t)`-coreset on every candidate center set.
///
/// The optimum is lower-bounded by half the best cost achievable with centers
/// drawn from the support (that discrete optimum is at most twice the true one).
pub fn transport_bound_check(
    s: &WeightedPointSet,
    s2: &WeightedPointSet,
    k: usize,
    xi: f64,
    t: f64,
) -> Result<TransportBoundReport> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::InvalidParameter(format!("xi = {xi} not in (0, 1]")));
    }
    let (mt, _) = mt_bruteforce(s, s2)?;
    let (opt_disc, _) = opt_bruteforce(s, k.min(s.len()), s.points())?;
    let opt_lower = opt_disc / 2.0;
    let premise = mt <= xi / (8.0 * (1.0 + 2.0 / xi)) * opt_lower + t;
    let coreset = if premise {
        let cands = coreset_candidates(s, s2, k, 0.25, 20_000, 0);
        Some(coreset_check(s, s2, xi, 4.0 * (1.0 + 2.0 / xi) * t, &cands)?)
    } else {
        None
    };
    Ok(TransportBoundReport {
        mt,
        opt_lower,
        premise,
        coreset,
    })
}
