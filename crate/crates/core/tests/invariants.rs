mod common;

use common::oracle::{random_action, random_scenario, random_state};
use mecslice::agent::{ActionLayout, Pads, RandomAgent};
use mecslice::autonet::{soft_update, Activation, Dense, Module};
use mecslice::env::dynamics::{masked_compute_row, pareto_sample, snr};
use mecslice::env::{Environment, ScenarioConfig};
use mecslice::harness::Summary;
use mecslice::topology::{build_graph, build_layout, propagation_operator};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoded_actions_are_feasible(seed in any::<u64>(), extra in 0usize..3, noncoop in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scenario(&mut rng);
        let pads = Pads {
            nodes: Some(sc.n_nodes() + extra),
            slices: Some(sc.max_slices_per_node() + extra),
            users: Some(sc.max_users_per_node() + extra),
        };
        let layout = ActionLayout::new(&sc, pads, noncoop).unwrap();
        let mut agent = RandomAgent::new(layout.clone(), seed);
        for _ in 0..20 {
            let action = layout.decode(&agent.act()).unwrap();
            prop_assert!(action.max_simplex_error() <= 1e-6);
            action.validate(&sc, 1e-6).unwrap();
            prop_assert!(!noncoop || action.is_noncooperative());
        }
    }

    #[test]
    fn encode_inverts_decode(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scenario(&mut rng);
        let layout = ActionLayout::new(&sc, Pads::default(), false).unwrap();
        let action = random_action(&mut rng, &sc);
        let back = layout.decode(&layout.encode(&action)).unwrap();
        prop_assert_eq!(back, action);
    }

    #[test]
    fn queues_and_reward_stay_in_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scenario(&mut rng);
        let mut env = Environment::new(sc.clone(), seed);
        env.set_state(random_state(&mut rng, &sc)).unwrap();
        for _ in 0..20 {
            let r = env.step(&random_action(&mut rng, &sc)).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.reward));
            prop_assert!(r.satisfied <= r.generated);
            for u in &r.next_state.users {
                prop_assert!(u.cq_backlog >= 0.0 && u.tq_backlog >= 0.0);
                prop_assert!(u.channel_gain >= 0.0);
            }
            prop_assert!(r.latencies.iter().all(|l| *l >= 0.0));
        }
    }

    #[test]
    fn snr_ignores_rb_count(gain in 1e-12f64..1e-2, a in 1e-6f64..100.0, b in 1e-6f64..100.0) {
        let phys = ScenarioConfig::default().physics();
        let (x, y) = (snr(gain, a, &phys), snr(gain, b, &phys));
        prop_assert!((x - y).abs() <= 1e-12 * x.abs());
    }

    #[test]
    fn pareto_never_below_threshold(threshold in 1.0f64..1e7, shape in 1.01f64..20.0, u in 1e-12f64..1.0, v in 1e-12f64..1.0) {
        let (x, y) = (pareto_sample(threshold, shape, u), pareto_sample(threshold, shape, v));
        prop_assert!(x >= threshold && y >= threshold);
        if u < v {
            prop_assert!(x >= y);
        }
    }

    #[test]
    fn masked_rows_are_simplexes(links in proptest::collection::vec(0u8..2, 1..6), seed in any::<u64>()) {
        let mut links: Vec<f64> = links.into_iter().map(f64::from).collect();
        links[0] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shares = common::oracle::simplex(&mut rng, links.len(), true);
        let row = masked_compute_row(&links, &shares);
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(row.iter().zip(&links).all(|(r, l)| *l > 0.0 || *r == 0.0));
    }

    #[test]
    fn graph_is_symmetric_and_keeps_nearest(nodes in 1usize..10, a_max in 0usize..5, seed in any::<u64>()) {
        let a_max = a_max.min(nodes - 1);
        let cfg = ScenarioConfig { nodes, users: 6 * nodes, max_neighbors: a_max, ..Default::default() };
        let layout = build_layout(&cfg, seed).unwrap();
        let g = build_graph(&layout, a_max, cfg.coop_penalty);
        prop_assert!(g.adjacency.is_symmetric() && g.weighted_adjacency.is_symmetric());
        prop_assert!(g.edge_count() <= nodes * a_max);
        for i in 0..nodes {
            prop_assert_eq!(g.weighted_adjacency.get(i, i), 1.0);
            prop_assert!(g.degree(i) >= a_max);
            for j in 0..nodes {
                let w = g.weighted_adjacency.get(i, j);
                prop_assert!((0.0..=1.0).contains(&w));
                prop_assert_eq!(w > 0.0, g.adjacency.get(i, j) > 0.0);
            }
        }
        prop_assert!(propagation_operator(&g).matrix.is_symmetric());
    }

    #[test]
    fn soft_update_is_a_convex_combination(tau in 0.0f64..=1.0, s1 in any::<u64>(), s2 in any::<u64>()) {
        let mut target = Dense::new(3, 2, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(s1));
        let source = Dense::new(3, 2, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(s2));
        let before: Vec<f64> = target.params().iter().flat_map(|t| t.values().to_vec()).collect();
        soft_update(&mut target, &source, tau);
        let src: Vec<f64> = source.params().iter().flat_map(|t| t.values().to_vec()).collect();
        let after: Vec<f64> = target.params().iter().flat_map(|t| t.values().to_vec()).collect();
        for ((a, b), s) in after.iter().zip(&before).zip(&src) {
            prop_assert!((a - (tau * s + (1.0 - tau) * b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn summary_is_ordered(xs in proptest::collection::vec(0.0f64..1.0, 1..50)) {
        let s = Summary::of(&xs);
        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        prop_assert!(s.variance >= 0.0);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
    }
}
