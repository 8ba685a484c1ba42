//! The analyst side: oracles from the transcript, tree, coreset clustering
//! and center recovery.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::{Context, EncodedUser};
use super::params::Model;
use crate::error::{Error, Result};
use crate::net_tree::{build_tree, NetTree};
use crate::nets::NetPoint;
use crate::oracles::exact::{CentralNoise, CentralNoiseHistogram, ExactHistogram, ExactVectorSums};
use crate::oracles::local::{virtual_user, LocalHistogram, LocalVectorSums};
use crate::oracles::shuffle::ShuffleAggregate;
use crate::oracles::{Bucket, FrequencyOracle, VectorSumOracle};
use crate::points::{clip_to_ball, norm, CenterSet, Clusterer, Point, WeightedPointSet};
use crate::rng;

/// Per-cluster statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// Leaves assigned to the cluster.
    pub leaves: usize,
    /// Estimated number of users, `n~^j`.
    pub count: f64,
    /// `|v~^j|`.
    pub sum_norm: f64,
    /// Whether the recovered center was renormalized onto the sphere.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
    pub node_budget: u64,
    pub budget_formula: u64,
    pub thresholds: Vec<usize>,
    /// Ambient-space quantization term `(d/d') Lambda^-2 sum_leaves f_z 4 rho_z^2`,
    /// available when true frequencies are: in the exact model.
    pub quantization: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub encode_s: f64,
    pub oracles_s: f64,
    pub tree_s: f64,
    pub cluster_s: f64,
    pub recover_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centers: CenterSet,
    /// Centers found on the coreset, in the projected, rescaled space.
    pub coreset_centers: CenterSet,
    pub clusters: Vec<ClusterStats>,
    pub tree: TreeStats,
    pub coreset_size: usize,
    /// Cost of the centers on the input divided by `n`, when the input is known.
    pub normalized_objective: Option<f64>,
    /// Fraction of users whose projection was clipped, when the input is known.
    pub clip_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<Timings>,
}

/// Oracles rebuilt from the transcript.
pub enum Backend {
    /// One histogram and one vector summation per level.
    Local {
        hist: Vec<LocalHistogram>,
        vecs: Vec<LocalVectorSums>,
    },
    Shuffle {
        hist: CentralNoiseHistogram,
        vecs: Vec<ShuffleAggregate>,
    },
    Exact {
        hist: ExactHistogram,
        vecs: ExactVectorSums,
    },
}

/// The backend seen as tree oracles. The root is answered with the public `n`.
pub struct Oracles {
    pub n: f64,
    pub dim: usize,
    pub backend: Backend,
}

impl FrequencyOracle for Oracles {
    fn frequency(&self, z: &NetPoint) -> f64 {
        let i = z.level();
        if i == 0 {
            return self.n;
        }
        match &self.backend {
            Backend::Local { hist, .. } => hist[i - 1].frequency(z),
            Backend::Shuffle { hist, .. } => hist.frequency(z),
            Backend::Exact { hist, .. } => hist.frequency(z),
        }
    }
}

impl VectorSumOracle for Oracles {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector_sum(&self, z: &NetPoint) -> Vec<f64> {
        self.vector_sum_many(std::slice::from_ref(z))
    }

    fn vector_sum_many(&self, zs: &[NetPoint]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut add = |v: Vec<f64>| {
            for (a, b) in out.iter_mut().zip(v) {
                *a += b;
            }
        };
        match &self.backend {
            Backend::Local { vecs, .. } => {
                for (i, o) in vecs.iter().enumerate() {
                    let at: Vec<NetPoint> = zs.iter().filter(|z| z.level() == i + 1).cloned().collect();
                    if !at.is_empty() {
                        add(o.vector_sum_many(&at));
                    }
                }
            }
            Backend::Shuffle { vecs, .. } => {
                for z in zs.iter().filter(|z| z.level() > 0) {
                    add(vecs[z.level() - 1].decode(Bucket::of(z)));
                }
            }
            Backend::Exact { vecs, .. } => {
                for z in zs.iter().filter(|z| z.level() > 0) {
                    add(vecs.vector_sum(z));
                }
            }
        }
        out
    }
}

fn check(users: &[EncodedUser], ctx: &Context) -> Result<()> {
    let n = ctx.cfg.input.n;
    if users.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} encoded users for a configuration with n = {n}",
            users.len()
        )));
    }
    let t = ctx.depth();
    for (i, u) in users.iter().enumerate() {
        if u.model() != ctx.model || u.slots() != t || u.user() != i as u64 {
            return Err(Error::InvalidParameter(format!(
                "user {i} was encoded under a different configuration"
            )));
        }
    }
    Ok(())
}

/// Aggregate a checked transcript into oracles.
pub fn build_oracles(users: &[EncodedUser], ctx: &Context) -> Result<Oracles> {
    check(users, ctx)?;
    let t = ctx.depth();
    let n = users.len();
    let d = ctx.cfg.input.d;
    let backend = match ctx.model {
        Model::Local => {
            let eps_h = ctx.cfg.hist_budget.epsilon / t as f64;
            let mut hist = Vec::with_capacity(t);
            let mut vecs = Vec::with_capacity(t);
            for j in 0..t {
                let ids: Vec<u64> = (0..n as u64).map(|u| virtual_user(u, j, t)).collect();
                let mut bits = Vec::with_capacity(n);
                let mut rows = Vec::with_capacity(n);
                for u in users {
                    if let EncodedUser::Local { hist, vec, .. } = u {
                        bits.push(hist[j]);
                        rows.push(vec[j].clone());
                    }
                }
                hist.push(LocalHistogram::with_users(bits, &ids, eps_h, &ctx.z));
                vecs.push(LocalVectorSums::with_users(d, rows, &ids, &ctx.z)?);
            }
            Backend::Local { hist, vecs }
        }
        Model::Shuffle => {
            let sc = ctx.shuffle.expect("shuffle context has a config");
            let mut exact = ExactHistogram::new();
            let mut vecs: Vec<ShuffleAggregate> = (0..t).map(|_| ShuffleAggregate::new(sc, ctx.z)).collect();
            for u in users {
                if let EncodedUser::Shuffle { chain, vec, .. } = u {
                    exact.add_chain(chain, 1.0);
                    for (a, c) in vecs.iter_mut().zip(vec) {
                        a.absorb_contribution(c)?;
                    }
                }
            }
            let noise = CentralNoise::calibrate(ctx.cfg.hist_budget.epsilon, ctx.cfg.hist_budget.delta, t)?;
            let hist = CentralNoiseHistogram::new(exact, noise, rng::derive_seed(ctx.seed, "central_noise", 0))?;
            Backend::Shuffle { hist, vecs }
        }
        Model::Exact => {
            let mut hist = ExactHistogram::new();
            let mut vecs = ExactVectorSums::new(d);
            for u in users {
                if let EncodedUser::Exact { chain, x, .. } = u {
                    hist.add_chain(chain, 1.0);
                    vecs.add(chain, x)?;
                }
            }
            Backend::Exact { hist, vecs }
        }
    };
    Ok(Oracles {
        n: n as f64,
        dim: d,
        backend,
    })
}

/// The decoder: tree from the histogram, clusterer on its leaves, leaves
/// partitioned by nearest coreset center, centers from the vector sums.
pub fn decode(users: &[EncodedUser], ctx: &Context, clusterer: &dyn Clusterer) -> Result<ClusteringResult> {
    let t0 = Instant::now();
    let oracles = build_oracles(users, ctx)?;
    let t1 = Instant::now();
    let tree = build_tree(&ctx.nets, &ctx.cfg.tree, &oracles)?;
    let t2 = Instant::now();
    let k = ctx.cfg.input.k;
    let mut coreset = tree.representative_set();
    if coreset.total_weight() <= 0.0 {
        coreset = WeightedPointSet::from_weighted(
            coreset.dim(),
            coreset.points().to_vec(),
            vec![1.0; coreset.len()],
        )?;
    }
    let coreset_centers = clusterer.cluster(&coreset, k)?;
    let t3 = Instant::now();

    let leaves: Vec<&crate::net_tree::TreeNode> = tree.leaves().collect();
    let mut groups: Vec<Vec<NetPoint>> = vec![Vec::new(); k];
    let mut counts = vec![0.0; k];
    for l in &leaves {
        let (j, _) = coreset_centers.nearest(&l.coords);
        groups[j].push(l.point.clone());
        counts[j] += l.freq;
    }
    let sums: Vec<Vec<f64>> = groups.par_iter().map(|g| oracles.vector_sum_many(g)).collect();
    let mut centers = Vec::with_capacity(k);
    let mut clusters = Vec::with_capacity(k);
    for j in 0..k {
        let div = counts[j].max(1.0);
        let mut c: Vec<f64> = sums[j].iter().map(|v| v / div).collect();
        let clipped = norm(&c) > 1.0;
        clip_to_ball(&mut c);
        clusters.push(ClusterStats {
            leaves: groups[j].len(),
            count: counts[j],
            sum_norm: norm(&sums[j]),
            clipped,
        });
        centers.push(Point(c));
    }
    let t4 = Instant::now();

    let quantization = match &oracles.backend {
        Backend::Exact { hist, .. } => {
            let i = ctx.cfg.input;
            let l = ctx.cfg.lambda;
            Some(i.d as f64 / ctx.cfg.proj_dim as f64 / (l * l) * tree.quantization_term(hist))
        }
        _ => None,
    };
    Ok(ClusteringResult {
        centers: CenterSet::new(centers),
        coreset_centers,
        clusters,
        tree: tree_stats(&tree, quantization),
        coreset_size: coreset.len(),
        normalized_objective: None,
        clip_rate: None,
        timings: Some(Timings {
            encode_s: 0.0,
            oracles_s: (t1 - t0).as_secs_f64(),
            tree_s: (t2 - t1).as_secs_f64(),
            cluster_s: (t3 - t2).as_secs_f64(),
            recover_s: (t4 - t3).as_secs_f64(),
        }),
    })
}

fn tree_stats(tree: &NetTree, quantization: Option<f64>) -> TreeStats {
    TreeStats {
        nodes: tree.len(),
        leaves: tree.leaves().count(),
        depth: tree.params.depth,
        node_budget: tree.params.node_budget,
        budget_formula: tree.params.budget_formula,
        thresholds: tree.thresholds.clone(),
        quantization,
    }
}
