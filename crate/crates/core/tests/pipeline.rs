use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use dpkmeans::pipeline::encoder::{encode_user, Context, EncodedUser};
use dpkmeans::pipeline::params::{derive_params, lambda};
use dpkmeans::pipeline::projection::Projection;
use dpkmeans::pipeline::{default_clusterer, encode_all, run, run_exact, Model, PipelineInput};
use dpkmeans::points::{clip_to_ball, norm};
use dpkmeans::rng::stream;

fn unit(d: usize, r: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn blobs(n: usize, centers: &[Vec<f64>], spread: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = stream(seed, "blobs", 0);
    (0..n)
        .map(|i| {
            let c = &centers[i % centers.len()];
            let mut x: Vec<f64> = c.iter().map(|v| v + spread * r.random_range(-1.0..1.0)).collect();
            clip_to_ball(&mut x);
            x
        })
        .collect()
}

fn context(n: usize, d: usize, k: usize, model: Model, seed: u64) -> Context {
    let input = PipelineInput::new(n, d, k, 1.0, 1e-5, 0.5, 0.1).with_proj_dim(2);
    let (cfg, nets) = derive_params(input).unwrap();
    Context::new(cfg, nets, model, seed).unwrap()
}

#[test]
fn encoding_depends_only_on_own_input() {
    let d = 6;
    let a = blobs(40, &[vec![0.2; d]], 0.3, 1);
    let mut b = blobs(40, &[vec![-0.3; d]], 0.3, 2);
    b[7] = a[7].clone();
    for model in [Model::Local, Model::Shuffle, Model::Exact] {
        let ctx = context(40, d, 2, model, 5);
        let ea = encode_all(&a, &ctx).unwrap();
        let eb = encode_all(&b, &ctx).unwrap();
        assert_eq!(ea[7], eb[7], "{model}");
        assert_ne!(ea[8], eb[8], "{model}");
        assert!(ea.iter().all(|u| u.slots() == ctx.depth() && u.model() == model));
    }
}

#[test]
fn exact_encoding_carries_the_decoder_chain() {
    let d = 5;
    let data = blobs(30, &[vec![0.1; d]], 0.4, 3);
    let ctx = context(30, d, 2, Model::Exact, 8);
    for (i, x) in data.iter().enumerate() {
        let u = encode_user(x, i as u64, &ctx, &mut stream(1, "u", i as u64)).unwrap();
        let (xp, _) = ctx.preprocess(x).unwrap();
        let full = ctx.nets.chain(&xp).unwrap();
        match u {
            EncodedUser::Exact { chain, .. } => {
                assert_eq!(chain, ctx.chain(x).unwrap());
                assert_eq!(chain[..], full[1..]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn local_transcript_has_one_bit_and_one_vector_per_level() {
    let d = 4;
    let data = blobs(20, &[vec![0.0; d]], 0.5, 4);
    let ctx = context(20, d, 2, Model::Local, 2);
    let users = encode_all(&data, &ctx).unwrap();
    for u in &users {
        match u {
            EncodedUser::Local { hist, vec, .. } => {
                assert_eq!(hist.len(), ctx.depth());
                assert_eq!(vec.len(), ctx.depth());
                assert!(hist.iter().all(|&s| s == 1 || s == -1));
                assert!(vec.iter().all(|v| v.len() == d));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(u.local_messages().unwrap().len(), 2 * ctx.depth());
    }
}

#[test]
fn projection_preserves_squared_norm_on_average() {
    let (d, dp) = (50, 5);
    let p = Projection::new(d, dp, 17).unwrap();
    assert!(p.orthonormality_error() < 1e-12);
    let mut r = stream(18, "dirs", 0);
    let draws = 4000;
    let mean: f64 = (0..draws)
        .map(|_| {
            let x = unit(d, &mut r);
            norm(&p.apply(&x).unwrap()).powi(2)
        })
        .sum::<f64>()
        / draws as f64;
    // E |P x|^2 = d'/d for a uniformly random unit x; the per-draw variance
    // is below 2 d' / d^2.
    let target = dp as f64 / d as f64;
    let se = (2.0 * dp as f64).sqrt() / d as f64 / (draws as f64).sqrt();
    assert!((mean - target).abs() < 5.0 * se, "mean {mean}, target {target}");
}

#[test]
fn exact_mode_centers_are_cluster_means() {
    let d = 8;
    let mut r = stream(30, "centers", 0);
    let centers: Vec<Vec<f64>> = (0..3).map(|_| unit(d, &mut r).into_iter().map(|v| 0.5 * v).collect()).collect();
    let data = blobs(400, &centers, 0.05, 31);
    let input = PipelineInput::new(400, d, 3, 1.0, 1e-6, 0.5, 0.1).with_proj_dim(2);
    let res = run_exact(&data, input, 4).unwrap();
    // With exact sums and counts, count-weighted centers add up to the data sum.
    let mut total = vec![0.0; d];
    let mut count = 0.0;
    for (c, st) in res.centers.centers.iter().zip(&res.clusters) {
        assert!(!st.clipped);
        count += st.count;
        for (t, v) in total.iter_mut().zip(&c.0) {
            *t += st.count * v;
        }
    }
    assert_eq!(count, 400.0);
    for j in 0..d {
        let s: f64 = data.iter().map(|x| x[j]).sum();
        assert!((total[j] - s).abs() < 1e-9, "coordinate {j}: {} vs {s}", total[j]);
    }
}

#[test]
fn lambda_matches_formula() {
    let l = lambda(1000, 0.1, 40, 4);
    assert!((l - (0.01 / (1000.0f64 / 0.1).ln() * 10.0).sqrt()).abs() < 1e-15);
}

#[test]
fn rejects_points_outside_the_ball() {
    let ctx = context(10, 3, 2, Model::Local, 1);
    assert!(encode_user(&[1.0, 1.0, 0.0], 0, &ctx, &mut stream(0, "x", 0)).is_err());
    assert!(encode_user(&[f64::NAN, 0.0, 0.0], 0, &ctx, &mut stream(0, "x", 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn preprocessing_lands_in_the_ball(raw in prop::collection::vec(-1.0..1.0f64, 6), seed in any::<u64>()) {
        let mut x = raw;
        clip_to_ball(&mut x);
        let ctx = context(50, 6, 2, Model::Exact, seed);
        let (xp, clipped) = ctx.preprocess(&x).unwrap();
        prop_assert!(norm(&xp) <= 1.0 + 1e-12);
        if !clipped {
            let px = ctx.projection.apply(&x).unwrap();
            for (a, b) in xp.iter().zip(&px) {
                prop_assert!((a - ctx.cfg.lambda * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn every_model_is_deterministic_and_in_the_ball(
        n in 8usize..40,
        k in 1usize..=3,
        seed in 0u64..1000,
        model in prop::sample::select(vec![Model::Local, Model::Shuffle, Model::Exact]),
    ) {
        let d = 4;
        let data = blobs(n, &[vec![0.3, 0.1, 0.0, -0.2], vec![-0.4, 0.0, 0.2, 0.1]], 0.2, seed);
        let input = PipelineInput::new(n, d, k, 1.0, 1e-5, 0.5, 0.1).with_proj_dim(2);
        let a = run(&data, input, model, seed, &default_clusterer(seed)).unwrap();
        let b = run(&data, input, model, seed, &default_clusterer(seed)).unwrap();
        prop_assert_eq!(&a.centers, &b.centers);
        prop_assert_eq!(a.centers.k(), k);
        prop_assert!(a.centers.centers.iter().all(|c| c.norm() <= 1.0 + 1e-12));
        prop_assert!(a.tree.nodes as u64 <= a.tree.node_budget);
    }
}
