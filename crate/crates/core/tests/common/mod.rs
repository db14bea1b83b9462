#![allow(dead_code)]

pub mod grad;
pub mod oracle;

use mecslice::agent::{ActionLayout, Pads};
use mecslice::env::{Scenario, ScenarioConfig, Service, SliceDef, UserParams};
use mecslice::topology::{build_graph, build_layout};

pub fn config(nodes: usize, users: usize) -> ScenarioConfig {
    ScenarioConfig {
        nodes,
        users,
        max_neighbors: 3.min(nodes - 1),
        ..Default::default()
    }
}

pub fn sampled(nodes: usize, users: usize, seed: u64) -> Scenario {
    let cfg = config(nodes, users);
    let graph = build_graph(&build_layout(&cfg, seed).unwrap(), cfg.max_neighbors, cfg.coop_penalty);
    Scenario::sample(&cfg, graph, seed).unwrap()
}

/// `nodes` nodes, each with three one-user slices (eMBB, mMTC, uRLLC).
pub fn three_slice(nodes: usize) -> Scenario {
    let cfg = config(nodes, 3 * nodes);
    let graph = build_graph(&build_layout(&cfg, 5).unwrap(), cfg.max_neighbors, cfg.coop_penalty);
    let user = |d: f64| UserParams {
        distance_m: d,
        arrival_prob: 0.7,
        pareto_shape: 6.0,
        threshold_bits: 4000.0,
    };
    let slices = (0..nodes)
        .map(|n| {
            Service::ALL
                .iter()
                .enumerate()
                .map(|(s, &service)| SliceDef {
                    service,
                    users: vec![user(20.0 + 10.0 * (n * 3 + s) as f64)],
                })
                .collect()
        })
        .collect();
    Scenario::from_slices(cfg, graph, slices).unwrap()
}

pub fn layout(scenario: &Scenario) -> ActionLayout {
    ActionLayout::new(scenario, Pads::default(), false).unwrap()
}

/// Central-difference agreement with a small absolute floor for near-zero
/// derivatives.
pub fn close(analytic: f64, numeric: f64, rel: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs()).max(1e-3);
    (analytic - numeric).abs() <= rel * scale
}
