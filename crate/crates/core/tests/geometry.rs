use proptest::prelude::*;

use dpkmeans::net_tree::{build_tree, compute_threshold, TreeParams};
use dpkmeans::nets::NetFamily;
use dpkmeans::oracles::exact::ExactHistogram;
use dpkmeans::points::{clip_to_ball, cost, sq_dist, CenterSet, Point, WeightedPointSet};
use dpkmeans::transport::{cost_change_check, mt_bruteforce, mt_with_map, TransportMap};

fn ball_point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, d).prop_map(|mut v| {
        clip_to_ball(&mut v);
        v
    })
}

fn weighted_set(d: usize, max: usize) -> impl Strategy<Value = WeightedPointSet> {
    prop::collection::vec((ball_point(d), 0.01..3.0f64), 1..=max).prop_map(move |pw| {
        let (p, w): (Vec<_>, Vec<_>) = pw.into_iter().map(|(p, w)| (Point(p), w)).unzip();
        WeightedPointSet::from_weighted(d, p, w).unwrap()
    })
}

fn instance() -> impl Strategy<Value = (WeightedPointSet, WeightedPointSet, Vec<usize>)> {
    (1usize..=3).prop_flat_map(|d| {
        (weighted_set(d, 4), weighted_set(d, 4), prop::collection::vec(0usize..16, 4))
    })
}

fn map_from(s: &WeightedPointSet, s2: &WeightedPointSet, picks: &[usize]) -> TransportMap {
    let images = s
        .points()
        .iter()
        .zip(picks)
        .map(|(y, &j)| if j < s2.len() { s2.point(j).clone() } else { y.clone() })
        .collect();
    TransportMap { images }
}

proptest! {
    #[test]
    fn brute_force_is_minimal((s, s2, picks) in instance()) {
        let (best, arg) = mt_bruteforce(&s, &s2).unwrap();
        let mt = mt_with_map(&map_from(&s, &s2, &picks), &s, &s2).unwrap();
        prop_assert!(best <= mt + 1e-9 * (1.0 + mt));
        prop_assert!((mt_with_map(&arg, &s, &s2).unwrap() - best).abs() < 1e-9 * (1.0 + best));
    }

    #[test]
    fn transport_to_self_is_free(s in weighted_set(2, 5)) {
        prop_assert_eq!(mt_bruteforce(&s, &s).unwrap().0, 0.0);
    }

    #[test]
    fn transport_bounds_cost_change(
        (s, s2, picks) in instance(),
        xi in prop::sample::select(vec![0.1, 0.5, 1.0]),
        raw_centers in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 1..=3),
    ) {
        let d = s.dim();
        let centers = CenterSet::new(
            raw_centers.into_iter().map(|mut c| { c.truncate(d); clip_to_ball(&mut c); Point(c) }).collect(),
        );
        let k = centers.k();
        let phi = move |x: &[f64]| ((x[0] + 1.0) * 7.0) as usize % k;
        let psi = map_from(&s, &s2, &picks);
        let r = cost_change_check(&s, &s2, &psi, &phi, &centers, xi).unwrap();
        prop_assert!(r.holds(), "{:?}", r);
    }

    #[test]
    fn cost_is_nonnegative_and_monotone_in_centers(s in weighted_set(2, 6), a in ball_point(2), b in ball_point(2)) {
        let one = cost(&s, &CenterSet::new(vec![Point(a.clone())])).unwrap();
        let two = cost(&s, &CenterSet::new(vec![Point(a), Point(b)])).unwrap();
        prop_assert!(one >= 0.0 && two <= one);
    }
}

proptest! {
    #[test]
    fn decode_covers_and_chains_nest(d in 1usize..=4, x in ball_point(4), depth in 0usize..=7) {
        let x = &x[..d];
        let nets = NetFamily::new(d, depth).unwrap();
        let chain = nets.chain(x).unwrap();
        prop_assert_eq!(chain.len(), depth + 1);
        prop_assert_eq!(&chain[0], &nets.root());
        for (i, z) in chain.iter().enumerate() {
            prop_assert_eq!(z.level(), i);
            prop_assert!(nets.contains(z));
            prop_assert!(sq_dist(x, &nets.coords(z)).sqrt() <= 2.0 * nets.rho(i) * (1.0 + 1e-12));
            let own = nets.decode(i, x).unwrap();
            prop_assert!(sq_dist(x, &nets.coords(&own)).sqrt() <= nets.rho(i) * (1.0 + 1e-12));
            if i > 0 {
                prop_assert_eq!(&nets.parent(z).unwrap(), &chain[i - 1]);
                prop_assert!(nets.children(&chain[i - 1]).unwrap().contains(z));
            }
        }
    }

    #[test]
    fn children_respect_branching_bound(d in 1usize..=3, x in ball_point(3), level in 0usize..=4) {
        let nets = NetFamily::new(d, 5).unwrap();
        let z = nets.decode(level, &x[..d]).unwrap();
        let kids = nets.children(&z).unwrap();
        prop_assert!(kids.len() as u64 <= nets.branching_bound());
        for c in &kids {
            prop_assert_eq!(&nets.parent(c).unwrap(), &z);
        }
    }

    #[test]
    fn threshold_satisfies_halving_inequality(
        mut f in prop::collection::vec(0.0..1e3f64, 0..120),
        ka in 1u64..12,
        rounds in 1usize..10,
    ) {
        f.sort_by(f64::total_cmp);
        let m = f.len();
        let tau = compute_threshold(&f, ka, rounds).unwrap();
        prop_assert!(tau <= m);
        prop_assert!(tau as u64 % ka == 0 || tau == m);
        if tau < m {
            let n: f64 = f.iter().sum();
            let lhs: f64 = f[..m - tau].iter().sum();
            let lower = (m - tau).saturating_sub(ka as usize);
            let rhs = 2.0 * f[..lower].iter().sum::<f64>() + n / 2f64.powi(rounds as i32);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
        }
    }
}

fn cluster_data(n: usize, centers: &[Vec<f64>], jitter: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let c = &centers[i % centers.len()];
            let j = &jitter[i % jitter.len()];
            let mut x: Vec<f64> = c.iter().zip(j).map(|(a, b)| a + 0.05 * b).collect();
            clip_to_ball(&mut x);
            x
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_tree_invariants(
        n in 2usize..80,
        k in 1usize..=3,
        centers in prop::collection::vec(ball_point(2), 1..=3),
        jitter in prop::collection::vec(ball_point(2), 1..=20),
        xi in prop::sample::select(vec![0.1, 0.5, 1.0]),
    ) {
        let data = cluster_data(n, &centers, &jitter);
        let nets = NetFamily::new(2, TreeParams::depth_for(n)).unwrap();
        let params = TreeParams::new(n, k, xi, &nets).unwrap();
        let hist = ExactHistogram::from_points(&nets, &data).unwrap();
        let tree = build_tree(&nets, &params, &hist).unwrap();
        prop_assert!(tree.len() as u64 <= params.node_budget);

        let again = build_tree(&nets, &params, &hist).unwrap();
        prop_assert_eq!(&tree.nodes, &again.nodes);

        let rep = tree.representative_set();
        prop_assert!((rep.total_weight() - n as f64).abs() < 1e-9);

        // Moving every point to its leaf costs at most the quantization term.
        let s = WeightedPointSet::from_points(2, data.iter().cloned().map(Point).collect()).unwrap();
        let images: Vec<Point> = s
            .points()
            .iter()
            .map(|p| {
                let z = tree.representative(&p.0).unwrap();
                prop_assert!(!tree.node(&z).unwrap().expanded);
                Ok(Point(nets.coords(&z)))
            })
            .collect::<Result<_, TestCaseError>>()?;
        let mt = mt_with_map(&TransportMap { images }, &s, &rep).unwrap();
        prop_assert!(mt <= tree.quantization_term(&hist) + 1e-9);
    }
}

#[test]
fn tree_round_trips_through_json() {
    let nets = NetFamily::new(2, TreeParams::depth_for(30)).unwrap();
    let params = TreeParams::new(30, 1, 1.0, &nets).unwrap();
    let data: Vec<Vec<f64>> = (0..30).map(|i| vec![0.3 + 0.001 * i as f64, -0.2]).collect();
    let hist = ExactHistogram::from_points(&nets, &data).unwrap();
    let tree = build_tree(&nets, &params, &hist).unwrap();
    let back = dpkmeans::net_tree::NetTree::from_json(&tree.to_json()).unwrap();
    assert_eq!(back.nodes, tree.nodes);
    assert_eq!(back.representative(&data[0]).unwrap(), tree.representative(&data[0]).unwrap());
}
