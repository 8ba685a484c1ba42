//! The user side: one message bundle per user, computed from its point and
//! the public context alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Model, PipelineConfig};
use super::projection::Projection;
use crate::error::{Error, Result};
use crate::nets::{NetFamily, NetPoint};
use crate::oracles::local::{generalized_hist_encode, generalized_vector_encode};
use crate::oracles::shuffle::{shuffle_bvs_contribution, ShuffleConfig, ShuffleContribution};
use crate::oracles::wire::{LocalMessage, Payload};
use crate::oracles::{Bucket, SharedRandomness};
use crate::points::norm;
use crate::rng;

/// Everything public: parameters, nets, projection and shared randomness.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: PipelineConfig,
    pub model: Model,
    pub nets: NetFamily,
    pub projection: Projection,
    pub z: SharedRandomness,
    /// Per-level vector summation parameters in the shuffle model.
    pub shuffle: Option<ShuffleConfig>,
    pub seed: u64,
}

impl Context {
    pub fn new(cfg: PipelineConfig, nets: NetFamily, model: Model, seed: u64) -> Result<Self> {
        let i = cfg.input;
        let projection = Projection::new(i.d, cfg.proj_dim, rng::derive_seed(seed, "projection", 0))?;
        let z = SharedRandomness::new(rng::derive_seed(seed, "shared", 0));
        let shuffle = match model {
            Model::Shuffle => {
                let t = cfg.tree.depth as f64;
                if !(cfg.vec_budget.delta > 0.0) {
                    return Err(Error::InvalidParameter("the shuffle model needs delta > 0".into()));
                }
                Some(ShuffleConfig::new(
                    i.n as u64,
                    i.d,
                    cfg.vec_budget.epsilon / t,
                    cfg.vec_budget.delta / t,
                    cfg.oracle_failure,
                )?)
            }
            _ => None,
        };
        Ok(Context {
            cfg,
            model,
            nets,
            projection,
            z,
            shuffle,
            seed,
        })
    }

    pub fn depth(&self) -> usize {
        self.cfg.tree.depth
    }

    /// `x' = Lambda P x`, or the origin when `|P x| > 1 / Lambda`. The flag
    /// reports whether the clip fired.
    pub fn preprocess(&self, x: &[f64]) -> Result<(Vec<f64>, bool)> {
        let nx = norm(x);
        if !nx.is_finite() {
            return Err(Error::NonFinite);
        }
        if nx > 1.0 + 1e-9 {
            return Err(Error::OutsideBall(nx));
        }
        let xt = self.projection.apply(x)?;
        let l = self.cfg.lambda;
        if norm(&xt) > 1.0 / l {
            return Ok((vec![0.0; xt.len()], true));
        }
        Ok((xt.into_iter().map(|v| v * l).collect(), false))
    }

    /// Net points `y^1..y^T` of the preprocessed point.
    pub fn chain(&self, x: &[f64]) -> Result<Vec<NetPoint>> {
        let (xp, _) = self.preprocess(x)?;
        let mut c = self.nets.chain(&xp)?;
        c.remove(0);
        Ok(c)
    }
}

/// One user's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncodedUser {
    /// One histogram bit and one privatized vector per level.
    Local {
        user: u64,
        hist: Vec<i8>,
        vec: Vec<Vec<f64>>,
    },
    /// Chain buckets for the emulated histogram, and one vector summation
    /// contribution per level.
    Shuffle {
        user: u64,
        chain: Vec<NetPoint>,
        vec: Vec<ShuffleContribution>,
    },
    /// Noiseless: chain and the point itself.
    Exact {
        user: u64,
        chain: Vec<NetPoint>,
        x: Vec<f64>,
    },
}

impl EncodedUser {
    pub fn user(&self) -> u64 {
        match self {
            EncodedUser::Local { user, .. }
            | EncodedUser::Shuffle { user, .. }
            | EncodedUser::Exact { user, .. } => *user,
        }
    }

    pub fn model(&self) -> Model {
        match self {
            EncodedUser::Local { .. } => Model::Local,
            EncodedUser::Shuffle { .. } => Model::Shuffle,
            EncodedUser::Exact { .. } => Model::Exact,
        }
    }

    pub fn slots(&self) -> usize {
        match self {
            EncodedUser::Local { hist, .. } => hist.len(),
            EncodedUser::Shuffle { chain, .. } | EncodedUser::Exact { chain, .. } => chain.len(),
        }
    }

    /// Local-model reports as wire records.
    pub fn local_messages(&self) -> Option<Vec<LocalMessage>> {
        let EncodedUser::Local { user, hist, vec } = self else {
            return None;
        };
        let mut out = Vec::with_capacity(2 * hist.len());
        for (j, &s) in hist.iter().enumerate() {
            out.push(LocalMessage {
                user: *user as u32,
                slot: j as u16,
                payload: Payload::Sign(s),
            });
        }
        for (j, v) in vec.iter().enumerate() {
            out.push(LocalMessage {
                user: *user as u32,
                slot: (hist.len() + j) as u16,
                payload: Payload::Vector(v.clone()),
            });
        }
        Some(out)
    }
}

/// The encoder. Depends on nothing but `x`, the user index, the public
/// context and the user's own randomness.
pub fn encode_user<R: Rng + ?Sized>(x: &[f64], user: u64, ctx: &Context, rng: &mut R) -> Result<EncodedUser> {
    let chain = ctx.chain(x)?;
    Ok(match ctx.model {
        Model::Exact => EncodedUser::Exact {
            user,
            chain,
            x: x.to_vec(),
        },
        Model::Local => {
            let buckets: Vec<Bucket> = chain.iter().map(Bucket::of).collect();
            let hist = generalized_hist_encode(&buckets, user, ctx.cfg.hist_budget.epsilon, &ctx.z, rng);
            let vec = generalized_vector_encode(x, &buckets, user, ctx.cfg.vec_budget.epsilon, &ctx.z, rng)?;
            EncodedUser::Local { user, hist, vec }
        }
        Model::Shuffle => {
            let sc = ctx.shuffle.as_ref().expect("shuffle context has a config");
            let xc = clip_unit(x);
            let vec = chain
                .iter()
                .map(|y| shuffle_bvs_contribution(&xc, Bucket::of(y), user, sc, &ctx.z, rng))
                .collect::<Result<Vec<_>>>()?;
            EncodedUser::Shuffle { user, chain, vec }
        }
    })
}

fn clip_unit(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    crate::points::clip_to_ball(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::params::{derive_params, PipelineInput};

    fn ctx(model: Model) -> Context {
        let (cfg, nets) = derive_params(PipelineInput::new(64, 5, 2, 1.0, 1e-5, 0.5, 0.1).with_proj_dim(2)).unwrap();
        Context::new(cfg, nets, model, 11).unwrap()
    }

    #[test]
    fn origin_maps_to_origin_chain() {
        let c = ctx(Model::Exact);
        let (xp, clipped) = c.preprocess(&[0.0; 5]).unwrap();
        assert_eq!(xp, vec![0.0; 2]);
        assert!(!clipped);
        let mut expect = c.nets.chain(&[0.0, 0.0]).unwrap();
        expect.remove(0);
        assert_eq!(c.chain(&[0.0; 5]).unwrap(), expect);
    }

    #[test]
    fn clip_branch() {
        let mut c = ctx(Model::Exact);
        c.cfg.lambda = 4.0;
        let (xp, clipped) = c.preprocess(&[0.6, 0.6, 0.0, 0.0, 0.0]).unwrap();
        let xt = c.projection.apply(&[0.6, 0.6, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(clipped, norm(&xt) > 0.25);
        if clipped {
            assert_eq!(xp, vec![0.0, 0.0]);
        }
        let (_, clipped) = c.preprocess(&[0.0; 5]).unwrap();
        assert!(!clipped);
    }

    #[test]
    fn outputs_have_one_slot_per_level() {
        let x = [0.3, -0.1, 0.2, 0.0, 0.4];
        for m in [Model::Local, Model::Shuffle, Model::Exact] {
            let c = ctx(m);
            let mut r = rng::stream(1, "t", 0);
            let e = encode_user(&x, 3, &c, &mut r).unwrap();
            assert_eq!(e.slots(), c.depth());
            assert_eq!(e.model(), m);
            assert_eq!(e.user(), 3);
        }
    }

    #[test]
    fn norm_violation_is_an_error() {
        let c = ctx(Model::Local);
        let mut r = rng::stream(1, "t", 0);
        assert!(matches!(
            encode_user(&[1.0, 1.0, 0.0, 0.0, 0.0], 0, &c, &mut r),
            Err(Error::OutsideBall(_))
        ));
    }

    #[test]
    fn local_wire_records() {
        let c = ctx(Model::Local);
        let mut r = rng::stream(1, "t", 0);
        let e = encode_user(&[0.1; 5], 2, &c, &mut r).unwrap();
        let m = e.local_messages().unwrap();
        assert_eq!(m.len(), 2 * c.depth());
        let b = crate::oracles::wire::write_local(&m);
        assert_eq!(crate::oracles::wire::read_local(&b).unwrap(), m);
    }
}
