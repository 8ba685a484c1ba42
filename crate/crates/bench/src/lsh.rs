//! The practical variant: a SimHash tree in place of nets, private counts
//! and vector sums per node, and k-means++ on the noisy node means.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dpkmeans::oracles::local::{
    explicit_hist_encode, explicit_hist_vector_encode, virtual_user, LocalHistogram, LocalVectorSums,
};
use dpkmeans::oracles::{Bucket, SharedRandomness};
use dpkmeans::pipeline::{default_clusterer, normalized_objective};
use dpkmeans::points::{clip_to_ball, norm, CenterSet, Clusterer, Point, WeightedPointSet};
use dpkmeans::rng::{derive_seed, stream};
use dpkmeans::{Error, Result};

/// Hyperparameters of the variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshConfig {
    pub levels: usize,
    /// Expand a node when its estimated count reaches this.
    pub threshold: f64,
    /// Share of epsilon spent on vector sums; the rest goes to counts.
    pub vector_share: f64,
    /// Each user reports at one level only, instead of splitting epsilon.
    pub split_users: bool,
}

impl LshConfig {
    /// `T = ceil(log2 k) + 3`, threshold `1.5 floor(n/k)`, 0.9 of the
    /// budget on vectors, users split across levels.
    pub fn default_for(n: usize, k: usize) -> Self {
        let lg = if k <= 1 { 0 } else { (k as f64).log2().ceil() as usize };
        LshConfig {
            levels: lg + 3,
            threshold: 1.5 * (n / k.max(1)) as f64,
            vector_share: 0.9,
            split_users: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 62 {
            return Err(Error::InvalidParameter(format!("levels = {} not in 1..=62", self.levels)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidParameter("branch threshold must be positive".into()));
        }
        if !(self.vector_share > 0.0 && self.vector_share < 1.0) {
            return Err(Error::InvalidParameter("vector share must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Random hyperplane normals `v_1..v_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimHash {
    normals: Vec<Vec<f64>>,
}

impl SimHash {
    pub fn new(d: usize, levels: usize, seed: u64) -> Self {
        let mut r = stream(seed, "simhash", 0);
        let normals = (0..levels)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        SimHash { normals }
    }

    pub fn levels(&self) -> usize {
        self.normals.len()
    }

    /// Sign bits `g_1(x)..g_T(x)`, with `g_i(x) = [<v_i, x> >= 0]`.
    pub fn bits(&self, x: &[f64]) -> Vec<bool> {
        self.normals
            .iter()
            .map(|v| v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= 0.0)
            .collect()
    }

    /// Level signatures: entry `i` holds the first `i` bits, entry 0 is empty.
    pub fn chain(&self, x: &[f64]) -> Vec<Signature> {
        let b = self.bits(x);
        (0..=b.len())
            .map(|i| Signature {
                level: i,
                bits: b[..i].iter().enumerate().fold(0u64, |a, (j, &s)| a | ((s as u64) << j)),
            })
            .collect()
    }
}

/// A node of the LSH tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    pub level: usize,
    pub bits: u64,
}

impl Signature {
    pub fn root() -> Self {
        Signature { level: 0, bits: 0 }
    }

    pub fn bit(&self, j: usize) -> bool {
        self.bits >> j & 1 == 1
    }

    pub fn children(&self) -> [Signature; 2] {
        let l = self.level;
        [
            Signature {
                level: l + 1,
                bits: self.bits,
            },
            Signature {
                level: l + 1,
                bits: self.bits | 1 << l,
            },
        ]
    }

    pub fn is_prefix_of(&self, other: &Signature) -> bool {
        self.level <= other.level && (other.bits & ((1u64 << self.level) - 1)) == self.bits
    }

    pub fn bucket(&self) -> Bucket {
        let mut b = b"lsh".to_vec();
        b.extend_from_slice(&(self.level as u32).to_le_bytes());
        b.extend_from_slice(&self.bits.to_le_bytes());
        Bucket::from_bytes(&b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LshMode {
    Local,
    Exact,
}

/// Statistics of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LshNode {
    pub sig: Signature,
    /// Estimated number of users under the node, over the whole population.
    pub count: f64,
    pub expanded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LshResult {
    pub centers: CenterSet,
    pub config: LshConfig,
    pub nodes: Vec<LshNode>,
    pub leaves: usize,
    pub normalized_objective: f64,
}

/// Level reported by each user when users are split: a seeded balanced
/// assignment, `1..=T`.
pub fn level_assignment(n: usize, levels: usize, seed: u64) -> Vec<usize> {
    let mut a: Vec<usize> = (0..n).map(|i| 1 + i % levels).collect();
    a.shuffle(&mut stream(seed, "lsh_split", 0));
    a
}

/// Per-level oracles: users reporting at that level, and the factor that
/// scales their counts up to the whole population.
struct Level {
    hist: Option<LocalHistogram>,
    vecs: Option<LocalVectorSums>,
    exact: Vec<(Signature, Vec<f64>)>,
    scale: f64,
}

struct Oracles {
    mode: LshMode,
    dim: usize,
    levels: Vec<Level>,
}

impl Oracles {
    /// Count at `sig` as seen by the users of its level (unscaled).
    fn raw_count(&self, sig: &Signature) -> f64 {
        let l = &self.levels[sig.level - 1];
        match self.mode {
            LshMode::Local => l.hist.as_ref().unwrap().estimate(sig.bucket()),
            LshMode::Exact => l.exact.iter().filter(|(s, _)| sig.is_prefix_of(s)).count() as f64,
        }
    }

    fn raw_sum(&self, sig: &Signature) -> Vec<f64> {
        let l = &self.levels[sig.level - 1];
        match self.mode {
            LshMode::Local => l.vecs.as_ref().unwrap().estimate_many(&[sig.bucket()]),
            LshMode::Exact => {
                let mut out = vec![0.0; self.dim];
                for (s, x) in &l.exact {
                    if sig.is_prefix_of(s) {
                        for (o, v) in out.iter_mut().zip(x) {
                            *o += v;
                        }
                    }
                }
                out
            }
        }
    }
}

/// One report. `sig` and `index` are kept for the exact mode only.
struct Report {
    level: usize,
    user: u64,
    bit: Option<i8>,
    vec: Option<Vec<f64>>,
    sig: Signature,
    index: usize,
}

fn encode(data: &[Vec<f64>], hash: &SimHash, cfg: &LshConfig, eps: f64, mode: LshMode, seed: u64) -> Result<Oracles> {
    let n = data.len();
    let d = data[0].len();
    let t = cfg.levels;
    let z = SharedRandomness::new(derive_seed(seed, "lsh_shared", 0));
    let eps_h = (1.0 - cfg.vector_share) * eps;
    let eps_v = cfg.vector_share * eps;
    let assign = level_assignment(n, t, seed);
    let reports: Vec<Vec<Report>> = data
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<Vec<Report>> {
            let mut r = stream(seed, "lsh_encoder", i as u64);
            let chain = hash.chain(x);
            let levels: Vec<usize> = if cfg.split_users { vec![assign[i]] } else { (1..=t).collect() };
            let slots = levels.len();
            let mut out = Vec::with_capacity(slots);
            for (j, &lv) in levels.iter().enumerate() {
                let sig = chain[lv];
                let u = if cfg.split_users { i as u64 } else { virtual_user(i as u64, j, slots) };
                let (bit, vec) = match mode {
                    LshMode::Local => (
                        Some(explicit_hist_encode(sig.bucket(), u, eps_h / slots as f64, &z, &mut r)),
                        Some(explicit_hist_vector_encode(x, sig.bucket(), u, eps_v / slots as f64, &z, &mut r)?),
                    ),
                    LshMode::Exact => (None, None),
                };
                out.push(Report {
                    level: lv,
                    user: u,
                    bit,
                    vec,
                    sig,
                    index: i,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let slot_eps = if cfg.split_users { eps_h } else { eps_h / t as f64 };
    let mut levels = Vec::with_capacity(t);
    for lv in 1..=t {
        let mut users = Vec::new();
        let mut bits = Vec::new();
        let mut vecs = Vec::new();
        let mut exact = Vec::new();
        for rep in reports.iter().flatten().filter(|r| r.level == lv) {
            users.push(rep.user);
            if let Some(b) = rep.bit {
                bits.push(b);
            }
            if let Some(v) = &rep.vec {
                vecs.push(v.clone());
            }
            if mode == LshMode::Exact {
                exact.push((rep.sig, data[rep.index].clone()));
            }
        }
        let scale = if users.is_empty() { 0.0 } else { n as f64 / users.len() as f64 };
        let (hist, vsum) = match mode {
            LshMode::Local => (
                Some(LocalHistogram::with_users(bits, &users, slot_eps, &z)),
                Some(LocalVectorSums::with_users(d, vecs, &users, &z)?),
            ),
            LshMode::Exact => (None, None),
        };
        levels.push(Level {
            hist,
            vecs: vsum,
            exact,
            scale,
        });
    }
    Ok(Oracles { mode, dim: d, levels })
}

/// Grow the tree from the root, always splitting the root and then every
/// node whose scaled count reaches the threshold; cluster the noisy means of
/// all non-root nodes weighted by their counts.
pub fn lsh_private_kmeans(
    data: &[Vec<f64>],
    k: usize,
    eps: f64,
    cfg: &LshConfig,
    mode: LshMode,
    seed: u64,
) -> Result<LshResult> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidK { k, support: data.len() });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon = {eps}")));
    }
    cfg.validate()?;
    let d = data[0].len();
    for x in data {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let nx = norm(x);
        if nx > 1.0 + 1e-9 {
            return Err(Error::OutsideBall(nx));
        }
    }
    let hash = SimHash::new(d, cfg.levels, derive_seed(seed, "lsh_hash", 0));
    let oracles = encode(data, &hash, cfg, eps, mode, seed)?;

    let mut nodes = vec![LshNode {
        sig: Signature::root(),
        count: data.len() as f64,
        expanded: true,
    }];
    let mut frontier = vec![Signature::root()];
    let mut members: Vec<(Signature, f64)> = Vec::new();
    let mut leaves = 0;
    while let Some(s) = frontier.pop() {
        for c in s.children() {
            let raw = oracles.raw_count(&c);
            let count = raw * oracles.levels[c.level - 1].scale;
            let expanded = c.level < cfg.levels && count >= cfg.threshold;
            nodes.push(LshNode { sig: c, count, expanded });
            if expanded {
                frontier.push(c);
            } else {
                leaves += 1;
            }
            members.push((c, raw));
        }
    }
    nodes.sort_by_key(|n| n.sig);
    members.sort_by_key(|l| l.0);

    let means: Vec<Option<(Point, f64)>> = members
        .par_iter()
        .map(|(s, raw)| {
            let w = raw * oracles.levels[s.level - 1].scale;
            if w <= 0.0 {
                return None;
            }
            let sum = oracles.raw_sum(s);
            let mut c: Vec<f64> = sum.iter().map(|v| v / raw.max(1.0)).collect();
            clip_to_ball(&mut c);
            Some((Point(c), w))
        })
        .collect();
    let mut set = WeightedPointSet::new(d);
    for (p, w) in means.into_iter().flatten() {
        set.add(p, w)?;
    }
    let centers = if set.is_empty() {
        CenterSet::new(vec![Point::zeros(d); k])
    } else {
        let mut c = default_clusterer(seed).cluster(&set, k)?;
        for p in c.centers.iter_mut() {
            clip_to_ball(&mut p.0);
        }
        c
    };
    let objective = normalized_objective(data, &centers)?;
    Ok(LshResult {
        centers,
        config: *cfg,
        leaves,
        nodes,
        normalized_objective: objective,
    })
}
