use proptest::prelude::*;

use dpkmeans::pipeline::Model;
use dpkmeans::points::norm;
use dpkmeans_bench::lsh::{level_assignment, lsh_private_kmeans, LshConfig, LshMode, Signature, SimHash};
use dpkmeans_bench::mixture::{generate_mixture, MixtureConfig};
use dpkmeans_bench::sweep::{mean_std, Plan, Variant};

proptest! {
    #[test]
    fn simhash_chain_is_a_root_path(x in prop::collection::vec(-1.0..1.0f64, 6), levels in 1usize..12, seed in any::<u64>()) {
        let h = SimHash::new(6, levels, seed);
        let c = h.chain(&x);
        prop_assert_eq!(c.len(), levels + 1);
        prop_assert_eq!(c[0], Signature::root());
        for w in c.windows(2) {
            prop_assert!(w[0].children().contains(&w[1]));
            prop_assert!(w[0].is_prefix_of(&w[1]));
        }
        let bits = h.bits(&x);
        for (j, b) in bits.iter().enumerate() {
            prop_assert_eq!(c[levels].bit(j), *b);
        }
    }

    #[test]
    fn distinct_signatures_get_distinct_buckets(l1 in 0usize..10, b1 in any::<u64>(), l2 in 0usize..10, b2 in any::<u64>()) {
        let a = Signature { level: l1, bits: b1 & ((1 << l1) - 1) };
        let b = Signature { level: l2, bits: b2 & ((1 << l2) - 1) };
        if a != b {
            prop_assert_ne!(a.bucket(), b.bucket());
        }
    }

    #[test]
    fn level_assignment_is_balanced(n in 0usize..500, levels in 1usize..10, seed in any::<u64>()) {
        let a = level_assignment(n, levels, seed);
        prop_assert_eq!(a.len(), n);
        let counts: Vec<usize> = (1..=levels).map(|l| a.iter().filter(|&&x| x == l).count()).collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn mixture_points_lie_in_the_ball(k in 1usize..6, n in 1usize..200, d in 1usize..20, r in 2.5..1000.0f64, seed in any::<u64>()) {
        let m = generate_mixture(&MixtureConfig { k_true: k, n, d, r, seed }).unwrap();
        prop_assert!(m.points.iter().all(|x| x.len() == d && norm(x) <= 1.0 + 1e-12));
        prop_assert!(m.labels.iter().enumerate().all(|(i, &l)| l == i % k));
    }

    #[test]
    fn sample_deviation_is_nonnegative(xs in prop::collection::vec(-10.0..10.0f64, 1..50)) {
        let (m, s) = mean_std(&xs);
        prop_assert!(s >= 0.0);
        prop_assert!(xs.iter().cloned().fold(f64::INFINITY, f64::min) <= m + 1e-12);
    }
}

#[test]
fn plan_expands_in_odometer_order() {
    let p = Plan::parse("n = 100, 200\nk = 2, 3\nrepeats = 3 # comment\nseed = 4\nbaselines = trivial\n").unwrap();
    let got: Vec<(usize, usize)> = p.settings.iter().map(|s| (s.n, s.k)).collect();
    assert_eq!(got, vec![(100, 2), (100, 3), (200, 2), (200, 3)]);
    assert_eq!((p.repeats, p.seed, p.naive), (3, 4, false));
    assert!(p.settings.iter().all(|s| s.variant == Variant::Lsh && s.model == Model::Local));
    assert!(Plan::parse("unknown = 1").is_err());
    assert!(Plan::parse("n =").is_err());
    assert!(Plan::parse("repeats = 0").is_err());
    assert_eq!(Plan::varying("n = 1, 2\nk = 3"), vec!["n".to_string()]);
}

#[test]
fn exact_lsh_separates_well_separated_clusters() {
    let m = generate_mixture(&MixtureConfig { k_true: 4, n: 4000, d: 20, r: 100.0, seed: 3 }).unwrap();
    let cfg = LshConfig::default_for(4000, 4);
    let triv = dpkmeans_bench::baselines::trivial_objective(&m.points).unwrap();
    let res = lsh_private_kmeans(&m.points, 4, 1.0, &cfg, LshMode::Exact, 5).unwrap();
    assert!(res.normalized_objective < 0.5 * triv, "{} vs {triv}", res.normalized_objective);
    assert!(res.centers.centers.iter().all(|c| c.norm() <= 1.0 + 1e-12));
}
