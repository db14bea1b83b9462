//! Straight-line model of one slot, written against the raw configuration
//! rather than the library's helpers, plus a generator of small instances.

#![allow(clippy::needless_range_loop)]

use std::collections::VecDeque;

use mecslice::env::{
    Action, RcOrientation, Scenario, ScenarioConfig, Service, SliceDef, SlotDraws, SystemState, TqUpdate, UserParams,
    UserState,
};
use mecslice::topology::{build_graph, build_layout};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

#[derive(Debug, PartialEq)]
pub struct SlotOutcome {
    pub reward: f64,
    pub satisfied: usize,
    pub generated: usize,
    pub cq: Vec<f64>,
    pub tq: Vec<f64>,
    pub latency: Vec<f64>,
    pub gain: Vec<f64>,
    pub rc: Vec<f64>,
    pub rt: Vec<f64>,
}

pub fn slot(sc: &Scenario, state: &SystemState, a: &Action, d: &SlotDraws) -> SlotOutcome {
    let cfg = &sc.config;
    let p_rb = 10f64.powf((cfg.rb_power_dbm - 30.0) / 10.0);
    let n0 = 10f64.powf((cfg.noise_dbm_per_hz - 30.0) / 10.0);
    let b = cfg.rb_bandwidth_hz;
    let dt = cfg.slot_seconds;
    let n_nodes = sc.graph.positions.len();
    let n_users = sc.users.len();

    // frequency reaching each node after masking by the links and the penalty
    let mut node_hz = vec![0.0; n_nodes];
    for n in 0..n_nodes {
        let mut mass = 0.0;
        for j in 0..n_nodes {
            mass += sc.graph.adjacency.get(n, j) * a.node_compute[n][j];
        }
        let mut deg = 0.0;
        for j in 0..n_nodes {
            deg += sc.graph.adjacency.get(n, j);
        }
        let mut f = 0.0;
        for j in 0..n_nodes {
            let share = if mass > 0.0 {
                sc.graph.adjacency.get(n, j) * a.node_compute[n][j] / mass
            } else {
                sc.graph.adjacency.get(n, j) / deg
            };
            f += sc.graph.edge_weights.get(n, j) * share * cfg.compute_hz;
        }
        node_hz[n] = f;
    }

    let mut rc = vec![0.0; n_users];
    let mut rt = vec![0.0; n_users];
    for (n, node) in sc.nodes.iter().enumerate() {
        for (s, slice) in node.slices.iter().enumerate() {
            for (k, &u) in slice.users.iter().enumerate() {
                let hz = a.user_compute[n][s][k] * (a.slice_compute[n][s] * node_hz[n]);
                rc[u] = match cfg.rc_orientation {
                    RcOrientation::FreqOverCycles => hz / cfg.cycles_per_bit,
                    RcOrientation::CyclesOverFreq => cfg.cycles_per_bit / hz,
                };
                let z = a.user_rb[n][s][k] * (a.slice_rb[n][s] * cfg.rb_count);
                let h = state.users[u].channel_gain;
                let gamma = if z > 0.0 {
                    p_rb * z * h / (n0 * z * b)
                } else {
                    p_rb * h / (n0 * b)
                };
                rt[u] = z * b * (1.0 + gamma).log2();
            }
        }
    }

    let mut out = SlotOutcome {
        reward: 0.0,
        satisfied: 0,
        generated: 0,
        cq: vec![0.0; n_users],
        tq: vec![0.0; n_users],
        latency: vec![0.0; n_users],
        gain: vec![0.0; n_users],
        rc: rc.clone(),
        rt: rt.clone(),
    };
    for u in 0..n_users {
        let spec = &sc.users[u];
        let arrived = d.arrival[u] < spec.arrival_prob;
        let task = if arrived {
            spec.threshold_bits * d.size[u].powf(-1.0 / spec.pareto_shape)
        } else {
            0.0
        };
        let q = (state.users[u].cq_backlog + task - rc[u] * dt).max(0.0);
        let v = match cfg.tq_update {
            TqUpdate::ComputeMinusRadio => (state.users[u].tq_backlog + (rc[u] - rt[u]) * dt).max(0.0),
            TqUpdate::RadioMinusCompute => (state.users[u].tq_backlog + (rt[u] - rc[u]) * dt).max(0.0),
        };
        let rate = rc[u].min(rt[u]);
        let l = if q + v == 0.0 {
            0.0
        } else if rate > 0.0 {
            (q + v) / rate
        } else {
            f64::INFINITY
        };
        let bound = sc.config.services.get(sc.nodes[spec.node].slices[spec.slice].service).latency_req_s;
        if arrived {
            out.generated += 1;
            if l <= bound {
                out.satisfied += 1;
            }
        }
        out.cq[u] = q;
        out.tq[u] = v;
        out.latency[u] = l;
        out.gain[u] = d.fading[u] * spec.distance_m.powf(-cfg.pathloss_exponent);
    }
    out.reward = if out.generated == 0 {
        1.0
    } else {
        out.satisfied as f64 / out.generated as f64
    };
    out
}

/// Random simplex of length `len`; with `sparse`, some entries are exactly 0.
pub fn simplex(rng: &mut impl Rng, len: usize, sparse: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| {
            if sparse && rng.random_bool(0.3) {
                0.0
            } else {
                Exp1.sample(rng)
            }
        })
        .collect();
    if v.iter().all(|x| *x == 0.0) {
        v[rng.random_range(0..len)] = 1.0;
    }
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

pub fn random_action(rng: &mut impl Rng, sc: &Scenario) -> Action {
    let n = sc.nodes.len();
    let sparse = rng.random_bool(0.5);
    Action {
        node_compute: (0..n).map(|_| simplex(rng, n, sparse)).collect(),
        slice_compute: sc.nodes.iter().map(|nd| simplex(rng, nd.slices.len(), sparse)).collect(),
        user_compute: sc
            .nodes
            .iter()
            .map(|nd| nd.slices.iter().map(|s| simplex(rng, s.users.len(), sparse)).collect())
            .collect(),
        slice_rb: sc.nodes.iter().map(|nd| simplex(rng, nd.slices.len(), sparse)).collect(),
        user_rb: sc
            .nodes
            .iter()
            .map(|nd| nd.slices.iter().map(|s| simplex(rng, s.users.len(), sparse)).collect())
            .collect(),
    }
}

/// Up to two nodes, two slices per node and three users per node, with
/// randomized constants and both queue conventions.
pub fn random_scenario(rng: &mut impl Rng) -> Scenario {
    let nodes = rng.random_range(1..=2usize);
    let mut cfg = ScenarioConfig {
        nodes,
        users: 6 * nodes,
        max_neighbors: nodes - 1,
        compute_hz: rng.random_range(1e6..2e10),
        rb_count: rng.random_range(1.0..20.0),
        rb_power_dbm: rng.random_range(0.0..20.0),
        noise_dbm_per_hz: rng.random_range(-210.0..-170.0),
        cycles_per_bit: rng.random_range(1.0..30.0),
        slot_seconds: rng.random_range(0.001..1.0),
        pathloss_exponent: rng.random_range(2.0..4.0),
        coop_penalty: rng.random_range(0.1..=1.0),
        ..Default::default()
    };
    if rng.random_bool(0.2) {
        cfg.rc_orientation = RcOrientation::CyclesOverFreq;
    }
    if rng.random_bool(0.2) {
        cfg.tq_update = TqUpdate::RadioMinusCompute;
    }
    let graph = build_graph(&build_layout(&cfg, rng.random()).unwrap(), cfg.max_neighbors, cfg.coop_penalty);
    let slices = (0..nodes)
        .map(|_| {
            let n_slices = rng.random_range(1..=2usize);
            let n_users = rng.random_range(n_slices..=3);
            let mut counts = vec![1; n_slices];
            for _ in n_slices..n_users {
                counts[rng.random_range(0..n_slices)] += 1;
            }
            counts
                .into_iter()
                .map(|c| SliceDef {
                    service: Service::ALL[rng.random_range(0..3)],
                    users: (0..c)
                        .map(|_| UserParams {
                            distance_m: rng.random_range(10.0..100.0),
                            arrival_prob: rng.random_range(0.05..=1.0),
                            pareto_shape: rng.random_range(1.5..10.0),
                            threshold_bits: rng.random_range(100.0..3e6),
                        })
                        .collect(),
                })
                .collect()
        })
        .collect();
    Scenario::from_slices(cfg, graph, slices).unwrap()
}

/// Backlogs that are zero a third of the time and otherwise span six decades.
pub fn random_state(rng: &mut impl Rng, sc: &Scenario) -> SystemState {
    let backlog = |rng: &mut dyn rand::RngCore| {
        if rng.random_bool(0.33) {
            0.0
        } else {
            10f64.powf(rng.random_range(1.0..7.0))
        }
    };
    let users = sc
        .users
        .iter()
        .map(|u| UserState {
            cq_backlog: backlog(rng),
            tq_backlog: backlog(rng),
            channel_gain: Distribution::<f64>::sample(&Exp1, rng) * u.distance_m.powf(-sc.config.pathloss_exponent),
            distance_m: u.distance_m,
            arrival: false,
            task_size: 0.0,
            recent: VecDeque::new(),
        })
        .collect();
    SystemState {
        t: 0,
        users,
        weighted_adjacency: sc.graph.weighted_adjacency.clone(),
    }
}
