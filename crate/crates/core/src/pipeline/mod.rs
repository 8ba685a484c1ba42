//! One-round private k-means: project, rescale, encode each user once,
//! then decode a tree coreset and recover centers in the input space.

pub mod decoder;
pub mod encoder;
pub mod params;
pub mod projection;

use std::time::Instant;

use rayon::prelude::*;

pub use decoder::{decode, ClusterStats, ClusteringResult, Timings, TreeStats};
pub use encoder::{encode_user, Context, EncodedUser};
pub use params::{derive_params, Model, PipelineConfig, PipelineInput};
pub use projection::Projection;

use crate::error::{Error, Result};
use crate::points::{cost, Clusterer, KMeansPlusPlus, Point, WeightedPointSet};
use crate::rng;

/// Encode every user independently, each with its own randomness stream.
pub fn encode_all(data: &[Vec<f64>], ctx: &Context) -> Result<Vec<EncodedUser>> {
    data.par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = rng::stream(ctx.seed, "encoder", i as u64);
            encode_user(x, i as u64, ctx, &mut r)
        })
        .collect()
}

/// `cost(data, centers) / n` with every point at weight one.
pub fn normalized_objective(data: &[Vec<f64>], centers: &crate::points::CenterSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    // Fixed chunks summed in order keep the result independent of scheduling.
    let parts: Vec<f64> = data
        .par_chunks(1024)
        .map(|c| c.iter().map(|x| centers.nearest(x).1).sum())
        .collect();
    Ok(parts.iter().sum::<f64>() / data.len() as f64)
}

/// Data as a weighted set with unit weights.
pub fn as_weighted(data: &[Vec<f64>]) -> Result<WeightedPointSet> {
    let d = data.first().map(|x| x.len()).ok_or(Error::EmptyInput)?;
    WeightedPointSet::from_points(d, data.iter().cloned().map(Point).collect())
}

/// The full protocol on `data` under `model`: encode all users, then decode.
pub fn run(
    data: &[Vec<f64>],
    input: PipelineInput,
    model: Model,
    seed: u64,
    clusterer: &dyn Clusterer,
) -> Result<ClusteringResult> {
    if data.len() != input.n {
        return Err(Error::InvalidParameter(format!(
            "dataset has {} points, configuration says n = {}",
            data.len(),
            input.n
        )));
    }
    for x in data {
        if x.len() != input.d {
            return Err(Error::DimensionMismatch {
                expected: input.d,
                got: x.len(),
            });
        }
    }
    let (cfg, nets) = derive_params(input)?;
    let ctx = Context::new(cfg, nets, model, seed)?;
    let t0 = Instant::now();
    let users = encode_all(data, &ctx)?;
    let encode_s = t0.elapsed().as_secs_f64();
    let mut res = decode(&users, &ctx, clusterer)?;
    if let Some(t) = res.timings.as_mut() {
        t.encode_s = encode_s;
    }
    let clipped = data
        .par_iter()
        .map(|x| ctx.preprocess(x).map(|(_, c)| c as usize))
        .sum::<Result<usize>>()?;
    res.clip_rate = Some(clipped as f64 / data.len() as f64);
    res.normalized_objective = Some(normalized_objective(data, &res.centers)?);
    Ok(res)
}

pub fn default_clusterer(seed: u64) -> KMeansPlusPlus {
    KMeansPlusPlus {
        seed: rng::derive_seed(seed, "clusterer", 0),
        ..KMeansPlusPlus::default()
    }
}

pub fn run_local(data: &[Vec<f64>], input: PipelineInput, seed: u64) -> Result<ClusteringResult> {
    run(data, input, Model::Local, seed, &default_clusterer(seed))
}

pub fn run_shuffle(data: &[Vec<f64>], input: PipelineInput, seed: u64) -> Result<ClusteringResult> {
    run(data, input, Model::Shuffle, seed, &default_clusterer(seed))
}

pub fn run_exact(data: &[Vec<f64>], input: PipelineInput, seed: u64) -> Result<ClusteringResult> {
    run(data, input, Model::Exact, seed, &default_clusterer(seed))
}

/// Non-private reference: the default clusterer run on the data itself.
pub fn nonprivate_objective(data: &[Vec<f64>], k: usize, seed: u64) -> Result<f64> {
    let set = as_weighted(data)?;
    let c = default_clusterer(seed).cluster(&set, k)?;
    Ok(cost(&set, &c)? / data.len() as f64)
}
