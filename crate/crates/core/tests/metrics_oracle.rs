mod oracles;

use pe_core::metrics::{
    frechet_distance, intrinsic_dimension, wasserstein_p, wasserstein_transport, Order,
    DEFAULT_EXACT_CAP,
};
use proptest::prelude::*;

fn point_sets(max_n: usize, dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1..=max_n).prop_flat_map(move |n| {
        let pts = prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), n);
        (pts.clone(), pts)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn assignment_matches_permutation_search((a, b) in point_sets(6, 2), p in prop::sample::select(vec![1.0, 2.0, 3.0])) {
        let got = wasserstein_p(&a, &b, Order::Finite(p), DEFAULT_EXACT_CAP).unwrap().cost;
        let want = oracles::brute_force_wp(&a, &b, p);
        prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn bottleneck_matches_permutation_search((a, b) in point_sets(6, 3)) {
        let got = wasserstein_p(&a, &b, Order::Infinity, DEFAULT_EXACT_CAP).unwrap().cost;
        prop_assert!((got - oracles::brute_force_winf(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn transport_equals_assignment_for_equal_sizes((a, b) in point_sets(7, 2)) {
        let t = wasserstein_transport(&a, &b, 1.0).unwrap();
        let s = wasserstein_p(&a, &b, Order::Finite(1.0), DEFAULT_EXACT_CAP).unwrap().cost;
        prop_assert!((t - s).abs() <= 1e-9, "{} vs {}", t, s);
    }

    #[test]
    fn transport_equals_assignment_on_replicated_sets(
        a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..4),
        b in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..4),
    ) {
        // Uniform on A vs uniform on B equals uniform on |B| copies of A vs
        // |A| copies of B, which has equal sizes.
        let aa: Vec<Vec<f64>> = a.iter().flat_map(|x| std::iter::repeat(x.clone()).take(b.len())).collect();
        let bb: Vec<Vec<f64>> = b.iter().flat_map(|x| std::iter::repeat(x.clone()).take(a.len())).collect();
        let t = wasserstein_transport(&a, &b, 1.0).unwrap();
        let want = if aa.len() <= 7 {
            oracles::brute_force_wp(&aa, &bb, 1.0)
        } else {
            wasserstein_p(&aa, &bb, Order::Finite(1.0), DEFAULT_EXACT_CAP).unwrap().cost
        };
        prop_assert!((t - want).abs() <= 1e-9, "{} vs {}", t, want);
    }

    #[test]
    fn metric_axioms(
        a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 5),
        b in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 5),
        c in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 5),
    ) {
        let w = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| wasserstein_p(x, y, Order::Finite(2.0), 16).unwrap().cost;
        prop_assert!(w(&a, &a) <= 1e-12);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-12);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-9);
        prop_assert!(w(&a, &b) >= 0.0);
    }

    #[test]
    fn frechet_closed_form_in_one_dimension(
        a in prop::collection::vec(-5.0f64..5.0, 2..30),
        b in prop::collection::vec(-5.0f64..5.0, 2..30),
    ) {
        let pa: Vec<Vec<f64>> = a.iter().map(|&x| vec![x]).collect();
        let pb: Vec<Vec<f64>> = b.iter().map(|&x| vec![x]).collect();
        let got = frechet_distance(&pa, &pb).unwrap().distance;
        prop_assert!((got - oracles::frechet_1d(&a, &b)).abs() <= 1e-9);
    }
}

#[test]
fn two_point_example_is_one_half_for_every_order() {
    let a = vec![vec![0.0], vec![1.0]];
    let b = vec![vec![0.5], vec![0.5]];
    for p in [1.0, 2.0, 7.0] {
        assert!((wasserstein_p(&a, &b, Order::Finite(p), 4).unwrap().cost - 0.5).abs() < 1e-15);
    }
    assert_eq!(wasserstein_p(&a, &b, Order::Infinity, 4).unwrap().cost, 0.5);
}

#[test]
fn intrinsic_dimension_of_rank_one_and_isotropic_data() {
    let dir: Vec<f64> = (0..20).map(|i| (i as f64 + 1.0).sin()).collect();
    let line: Vec<Vec<f64>> = (0..50)
        .map(|k| dir.iter().map(|d| d * (k as f64 - 20.0) * 0.1 + 3.0).collect())
        .collect();
    assert_eq!(intrinsic_dimension(&line, 0.8).unwrap(), 1);

    // ±e_i for each axis: centered, with equal singular values.
    let mut iso = Vec::new();
    for i in 0..10 {
        for s in [-1.0, 1.0] {
            let mut v = vec![0.0; 10];
            v[i] = s;
            iso.push(v);
        }
    }
    assert_eq!(intrinsic_dimension(&iso, 0.8).unwrap(), 8);
}
