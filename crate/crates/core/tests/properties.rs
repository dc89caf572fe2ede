use fgwmixup::augment::{discretize_adjacency, mix_labels, thresholded_density};
use fgwmixup::barycenter::update_structure;
use fgwmixup::fgw::{solve_fgw_relaxed, solve_fgw_strict, FgwConfig};
use fgwmixup::graph::{feature_distance_matrix, uniform_measure, Graph};
use ndarray::Array2;
use proptest::prelude::*;

fn graph_strategy(max_n: usize, d: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            proptest::collection::vec(any::<bool>(), n * n),
            proptest::collection::vec(-2.0f64..2.0, n * d),
        )
            .prop_map(move |(bits, feats)| {
                let mut a = Array2::zeros((n, n));
                for i in 0..n {
                    for j in (i + 1)..n {
                        if bits[i * n + j] {
                            a[[i, j]] = 1.0;
                            a[[j, i]] = 1.0;
                        }
                    }
                }
                let x = Array2::from_shape_vec((n, d), feats).unwrap();
                Graph::with_uniform_measure(x, a, None).unwrap()
            })
    })
}

fn symmetric_matrix(max_n: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| {
            Array2::from_shape_fn((n, n), |(i, j)| v[i.min(j) * n + i.max(j)])
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_distances_are_nonnegative(g1 in graph_strategy(6, 3), g2 in graph_strategy(6, 3)) {
        let d = feature_distance_matrix(&g1, &g2, 2.0).unwrap();
        prop_assert!(d.values().iter().all(|v| *v >= 0.0));
        let self_d = feature_distance_matrix(&g1, &g1, 2.0).unwrap();
        for i in 0..g1.num_nodes() {
            prop_assert_eq!(self_d.values()[[i, i]], 0.0);
        }
    }

    #[test]
    fn solvers_respect_their_marginals(g1 in graph_strategy(7, 2), g2 in graph_strategy(7, 2)) {
        let cfg = FgwConfig::default();
        let s = solve_fgw_strict(&g1, &g2, &cfg, None).unwrap();
        prop_assert!(s.coupling.row_marginal_error() <= 1e-7);
        prop_assert!(s.coupling.col_marginal_error() <= 1e-7);
        prop_assert!(s.value >= -1e-12);
        let r = solve_fgw_relaxed(&g1, &g2, &cfg, None).unwrap();
        prop_assert!(r.coupling.col_marginal_error() <= 1e-12);
        prop_assert!(r.coupling.plan().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn structure_update_is_symmetric(
        g1 in graph_strategy(5, 1),
        g2 in graph_strategy(5, 1),
        nt in 1usize..5,
        lambda in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p1 = Array2::from_shape_fn((nt, g1.num_nodes()), |_| rng.random::<f64>());
        let p2 = Array2::from_shape_fn((nt, g2.num_nodes()), |_| rng.random::<f64>());
        let mu = uniform_measure(nt).unwrap();
        let a = update_structure(&p1, &p2, g1.structure(), g2.structure(), lambda, &mu).unwrap();
        prop_assert_eq!(a.clone(), a.t().to_owned());
    }

    #[test]
    fn discretized_structure_is_a_simple_graph(
        a in symmetric_matrix(8),
        d1 in 0.0f64..=1.0,
        d2 in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let (b, theta) = discretize_adjacency(&a, d1, d2, lambda, 101).unwrap();
        prop_assert_eq!(b.clone(), b.t().to_owned());
        for ((i, j), v) in b.indexed_iter() {
            prop_assert!(*v == 0.0 || *v == 1.0);
            if i == j {
                prop_assert_eq!(*v, 0.0);
            }
        }
        prop_assert!((thresholded_density(&b, 0.5) - thresholded_density(&a, theta)).abs() < 1e-15);
    }

    #[test]
    fn mixed_labels_are_distributions(y1 in 0usize..5, y2 in 0usize..5, lambda in 0.0f64..=1.0) {
        let v = mix_labels(y1, y2, lambda, 5).unwrap();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(v.iter().all(|p| *p >= 0.0));
    }
}
