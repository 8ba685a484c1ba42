//! Growing a pruned subtree of the complete net tree from noisy frequencies,
//! and reading a weighted coreset off its leaves.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{NetFamily, NetPoint};
use crate::oracles::FrequencyOracle;
use crate::points::{bottom_m, Point, WeightedPointSet};

/// Parameters derived from `(n, k, xi)` and the net family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub k: usize,
    pub xi: f64,
    /// `8 sqrt((1 + 2/xi) / xi)`.
    pub theta: f64,
    /// Packing constant of the nets.
    pub gamma: f64,
    /// `ceil((1 + (2 + theta)/gamma)^d)`, saturating.
    pub a: u64,
    /// Number of halving rounds in the threshold search, `ceil(log2 n)`.
    pub rounds: usize,
    /// Tree depth `T = ceil(log2(n) / 2)`.
    pub depth: usize,
    /// Branching bound `floor((1 + 2/gamma)^d)`.
    pub branching: u64,
    /// `1 + B T Gamma k a`, saturating.
    pub budget_formula: u64,
    /// Node budget actually enforced: the formula, capped by the size of the
    /// complete tree.
    pub node_budget: u64,
}

fn log2_ceil(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (n as f64).log2().ceil() as usize
    }
}

impl TreeParams {
    pub fn depth_for(n: usize) -> usize {
        (((n.max(1)) as f64).log2() * 0.5).ceil().max(1.0) as usize
    }

    pub fn rounds_for(n: usize) -> usize {
        log2_ceil(n).max(1)
    }

    pub fn new(n: usize, k: usize, xi: f64, nets: &NetFamily) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if k == 0 {
            return Err(Error::InvalidK { k, support: n });
        }
        if !(xi > 0.0 && xi <= 1.0) {
            return Err(Error::InvalidParameter(format!("xi = {xi} not in (0, 1]")));
        }
        let depth = Self::depth_for(n);
        if nets.depth() != depth {
            return Err(Error::InvalidParameter(format!(
                "net family has depth {} but n = {n} needs {depth}",
                nets.depth()
            )));
        }
        let theta = 8.0 * ((1.0 + 2.0 / xi) / xi).sqrt();
        let gamma = nets.gamma();
        let a_f = (1.0 + (2.0 + theta) / gamma).powi(nets.dim() as i32).ceil();
        let a = if a_f >= u64::MAX as f64 { u64::MAX } else { a_f as u64 };
        let rounds = Self::rounds_for(n);
        let branching = nets.branching_bound();
        let budget_formula = 1u64.saturating_add(
            branching
                .saturating_mul(depth as u64)
                .saturating_mul(rounds as u64)
                .saturating_mul(k as u64)
                .saturating_mul(a),
        );
        let complete = (0..=depth).fold(0u64, |acc, i| acc.saturating_add(nets.level_size_bound(i)));
        Ok(TreeParams {
            k,
            xi,
            theta,
            gamma,
            a,
            rounds,
            depth,
            branching,
            budget_formula,
            node_budget: budget_formula.min(complete),
        })
    }

    pub fn ka(&self) -> u64 {
        (self.k as u64).saturating_mul(self.a)
    }
}

/// Number of top-frequency nodes to expand, given frequencies sorted in
/// ascending order.
///
/// Scans `j = 1..=min(rounds, m / ka)` and stops at the first `j` where
/// dropping the top `ka` nodes at least halves the prefix sum; otherwise
/// expands `min(m, rounds * ka)` nodes. Unsorted or negative input is an
/// error.
pub fn compute_threshold(sorted: &[f64], ka: u64, rounds: usize) -> Result<usize> {
    if sorted.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("frequencies must be finite and non-negative".into()));
    }
    if sorted.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("frequencies must be sorted ascending".into()));
    }
    let m = sorted.len();
    let ka_u = ka.min(usize::MAX as u64) as usize;
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0.0);
    for v in sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    let jmax = if ka_u == 0 { rounds } else { rounds.min(m / ka_u) };
    for j in 1..=jmax {
        let upper = m - (j - 1) * ka_u;
        let lower = m - j * ka_u;
        if prefix[upper] <= 2.0 * prefix[lower] {
            return Ok((j - 1) * ka_u);
        }
    }
    Ok(m.min((rounds as u64).saturating_mul(ka).min(usize::MAX as u64) as usize))
}

/// A node of the grown tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub point: NetPoint,
    pub coords: Vec<f64>,
    /// Oracle estimate, unclamped.
    pub freq: f64,
    pub expanded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetTree {
    pub nets: NetFamily,
    pub params: TreeParams,
    pub nodes: Vec<TreeNode>,
    /// Threshold chosen at each level `0..T-1`.
    pub thresholds: Vec<usize>,
    #[serde(skip)]
    index: HashMap<NetPoint, usize>,
}

fn clamp(f: f64) -> f64 {
    f.max(0.0)
}

/// Grow the tree level by level, expanding the `tau_i` nodes of highest
/// estimated frequency at each level.
pub fn build_tree(
    nets: &NetFamily,
    params: &TreeParams,
    oracle: &dyn FrequencyOracle,
) -> Result<NetTree> {
    let mut tree = NetTree {
        nets: *nets,
        params: *params,
        nodes: Vec::new(),
        thresholds: Vec::new(),
        index: HashMap::new(),
    };
    let root = nets.root();
    let f_root = oracle.frequencies(std::slice::from_ref(&root))[0];
    tree.push(nets, root, f_root);
    let mut level: Vec<usize> = vec![0];
    for _ in 0..params.depth {
        let mut order = level.clone();
        order.sort_by(|&a, &b| {
            clamp(tree.nodes[a].freq)
                .total_cmp(&clamp(tree.nodes[b].freq))
                .then_with(|| tree.nodes[a].point.cmp(&tree.nodes[b].point))
        });
        let sorted: Vec<f64> = order.iter().map(|&i| clamp(tree.nodes[i].freq)).collect();
        let tau = compute_threshold(&sorted, params.ka(), params.rounds)?;
        tree.thresholds.push(tau);
        let mut expand: Vec<usize> = order[order.len() - tau..].to_vec();
        expand.sort_by(|&a, &b| tree.nodes[a].point.cmp(&tree.nodes[b].point));
        let mut next_points = Vec::new();
        for &i in &expand {
            tree.nodes[i].expanded = true;
            next_points.extend(nets.children(&tree.nodes[i].point)?);
        }
        let freqs = oracle.frequencies(&next_points);
        let mut next = Vec::with_capacity(next_points.len());
        for (z, f) in next_points.into_iter().zip(freqs) {
            next.push(tree.nodes.len());
            tree.push(nets, z, f);
            assert!(
                tree.nodes.len() as u64 <= params.node_budget,
                "node budget {} exceeded",
                params.node_budget
            );
        }
        level = next;
    }
    Ok(tree)
}

impl NetTree {
    fn push(&mut self, nets: &NetFamily, z: NetPoint, freq: f64) {
        self.index.insert(z.clone(), self.nodes.len());
        self.nodes.push(TreeNode {
            coords: nets.coords(&z),
            point: z,
            freq,
            expanded: false,
        });
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.point.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, z: &NetPoint) -> Option<&TreeNode> {
        self.index.get(z).map(|&i| &self.nodes[i])
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| !n.expanded)
    }

    /// First leaf on the representative chain of `x`, walking down from the root.
    pub fn representative(&self, x: &[f64]) -> Result<NetPoint> {
        let chain = self.nets.chain(x)?;
        self.representative_of_chain(&chain)
    }

    pub fn representative_of_chain(&self, chain: &[NetPoint]) -> Result<NetPoint> {
        for z in chain {
            match self.node(z) {
                Some(n) if !n.expanded => return Ok(z.clone()),
                Some(_) => continue,
                None => break,
            }
        }
        Err(Error::InvalidParameter("chain leaves the tree".into()))
    }

    /// Leaves weighted by their clamped estimated frequency.
    pub fn representative_set(&self) -> WeightedPointSet {
        let mut s = WeightedPointSet::new(self.nets.dim());
        for n in self.leaves() {
            s.add(Point(n.coords.clone()), clamp(n.freq))
                .expect("leaf coordinates are finite");
        }
        s
    }

    /// Upper bound on the transport cost from the data to the leaf set:
    /// `sum_leaves f_z 4 rho_z^2 + sum_leaves |f_z - max(f~_z, 0)|`, with `f`
    /// the true leaf frequencies.
    pub fn transport_bound(&self, exact: &dyn FrequencyOracle) -> f64 {
        let leaves: Vec<NetPoint> = self.leaves().map(|n| n.point.clone()).collect();
        let f = exact.frequencies(&leaves);
        self.leaves()
            .zip(f)
            .map(|(n, f)| {
                let rho = self.nets.rho(n.point.level());
                f * 4.0 * rho * rho + (f - clamp(n.freq)).abs()
            })
            .sum()
    }

    /// `sum_leaves f_z 4 rho_z^2` with the given leaf frequencies.
    pub fn quantization_term(&self, exact: &dyn FrequencyOracle) -> f64 {
        let leaves: Vec<NetPoint> = self.leaves().map(|n| n.point.clone()).collect();
        let f = exact.frequencies(&leaves);
        self.leaves()
            .zip(f)
            .map(|(n, f)| {
                let rho = self.nets.rho(n.point.level());
                f * 4.0 * rho * rho
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut t: NetTree =
            serde_json::from_str(s).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        t.rebuild_index();
        Ok(t)
    }
}

/// Lower bound on the k-means optimum of points spread over level-`level`
/// cells: if at least `ka + b` cells carry frequencies `freqs`, then
/// `opt >= (theta 2^-level)^2 bottom_b(freqs)`.
pub fn opt_lower_bound(
    level: usize,
    freqs: &[f64],
    ka: u64,
    b: usize,
    theta: f64,
) -> Result<f64> {
    if (freqs.len() as u64) < ka.saturating_add(b as u64) {
        return Err(Error::InvalidParameter(format!(
            "need at least ka + b = {} cells, got {}",
            ka.saturating_add(b as u64),
            freqs.len()
        )));
    }
    let r = theta * 0.5f64.powi(level as i32);
    Ok(r * r * bottom_m(freqs, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::exact::ExactHistogram;

    #[test]
    fn threshold_hand_examples() {
        assert_eq!(compute_threshold(&[1., 1., 1., 8.], 1, 10).unwrap(), 1);
        // Flat frequencies: the first halving test already passes.
        assert_eq!(compute_threshold(&[1., 1., 1., 1.], 1, 10).unwrap(), 0);
        // Fewer nodes than ka: expand everything.
        assert_eq!(compute_threshold(&[3., 5.], 4, 10).unwrap(), 2);
        // Geometric growth never halves: stop at rounds * ka.
        assert_eq!(compute_threshold(&[1., 4., 16., 64., 256.], 1, 3).unwrap(), 3);
        assert_eq!(compute_threshold(&[], 1, 3).unwrap(), 0);
        assert_eq!(compute_threshold(&[0.0; 5], 1, 3).unwrap(), 0);
        assert!(compute_threshold(&[2.0, 1.0], 1, 3).is_err());
        assert!(compute_threshold(&[-1.0, 1.0], 1, 3).is_err());
    }

    #[test]
    fn params_match_formulas() {
        let nets = NetFamily::new(2, TreeParams::depth_for(100)).unwrap();
        let p = TreeParams::new(100, 3, 0.5, &nets).unwrap();
        assert_eq!(p.depth, 4);
        assert_eq!(p.rounds, 7);
        let theta = 8.0 * ((1.0f64 + 4.0) / 0.5).sqrt();
        assert!((p.theta - theta).abs() < 1e-12);
        let a = (1.0 + (2.0 + theta) * 2f64.sqrt()).powi(2).ceil() as u64;
        assert_eq!(p.a, a);
        assert!(p.node_budget <= p.budget_formula);
        assert_eq!(TreeParams::depth_for(1), 1);
        assert_eq!(TreeParams::depth_for(2), 1);
        assert_eq!(TreeParams::depth_for(16), 2);
        assert_eq!(TreeParams::depth_for(17), 3);
    }

    fn toy(n: usize) -> (NetFamily, TreeParams, Vec<Vec<f64>>) {
        let nets = NetFamily::new(2, TreeParams::depth_for(n)).unwrap();
        let p = TreeParams::new(n, 2, 0.5, &nets).unwrap();
        let pts = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * 6.283;
                vec![0.7 * t.cos(), 0.7 * t.sin()]
            })
            .collect();
        (nets, p, pts)
    }

    #[test]
    fn exact_tree_represents_every_point() {
        let (nets, p, pts) = toy(50);
        let h = ExactHistogram::from_points(&nets, &pts).unwrap();
        let tree = build_tree(&nets, &p, &h).unwrap();
        assert!(tree.len() as u64 <= p.node_budget);
        let s = tree.representative_set();
        assert!((s.total_weight() - 50.0).abs() < 1e-9);
        for x in &pts {
            let z = tree.representative(x).unwrap();
            assert!(!tree.node(&z).unwrap().expanded);
            let d = crate::points::sq_dist(&nets.coords(&z), x).sqrt();
            assert!(d <= 2.0 * nets.rho(z.level()));
        }
    }

    #[test]
    fn zero_oracle_keeps_weights_zero() {
        let (nets, p, _) = toy(20);
        let zero = |_: &NetPoint| 0.0;
        let tree = build_tree(&nets, &p, &zero).unwrap();
        assert_eq!(tree.representative_set().total_weight(), 0.0);
        let single = TreeParams { a: 1, k: 1, ..p };
        // With ka = 1 and every frequency zero, the root is not expanded.
        let t2 = build_tree(&nets, &single, &zero).unwrap();
        assert_eq!(t2.len(), 1);
        assert_eq!(t2.thresholds[0], 0);
    }

    #[test]
    fn json_round_trip() {
        let (nets, p, pts) = toy(10);
        let h = ExactHistogram::from_points(&nets, &pts).unwrap();
        let tree = build_tree(&nets, &p, &h).unwrap();
        let back = NetTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(back.nodes, tree.nodes);
        assert_eq!(back.representative(&pts[3]).unwrap(), tree.representative(&pts[3]).unwrap());
    }

    #[test]
    fn lower_bound_on_a_line() {
        let nets = NetFamily::new(1, 6).unwrap();
        let xi = 0.5;
        let theta = 8.0 * ((1.0f64 + 2.0 / xi) / xi).sqrt();
        let a = (1.0 + (2.0 + theta)).ceil() as u64;
        let cells = nets.level_points(6).unwrap();
        assert!(cells.len() as u64 >= a + 4);
        let pts: Vec<Point> = cells.iter().map(|z| Point(nets.coords(z))).collect();
        let set = WeightedPointSet::from_points(1, pts).unwrap();
        let freqs = vec![1.0; cells.len()];
        let lb = opt_lower_bound(6, &freqs, a, 4, theta).unwrap();
        let part = crate::points::Partition::new(1, vec![0; set.len()]).unwrap();
        let opt = crate::points::partition_opt_cost(&set, &part).unwrap();
        assert!(lb <= opt, "{lb} > {opt}");
        assert!(opt_lower_bound(6, &freqs[..10], a, 4, theta).is_err());
    }
}
