//! Per-slot system equations as pure functions.
//!
//! All quantities are linear-scale SI: bits, seconds, watts, Hz.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::env::{Action, Physics, RcOrientation, Scenario, TqUpdate, UserSpec};
use crate::topology::Graph;

/// Uniform draws consumed by one slot, one entry per user in global order.
///
/// Splitting the randomness out lets an independent model of the slot be fed
/// exactly the same numbers as [`crate::env::Environment::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDraws {
    /// Uniform in `[0, 1)`; a task arrives when below the arrival probability.
    pub arrival: Vec<f64>,
    /// Uniform in `(0, 1)`; mapped through the inverse Pareto CDF.
    pub size: Vec<f64>,
    /// Exponential(1) power fading for the next slot.
    pub fading: Vec<f64>,
}

impl SlotDraws {
    /// Draws in user order: arrival, size, fading for user 0, then user 1, ...
    pub fn sample(rng: &mut impl Rng, n_users: usize) -> Self {
        let mut draws = SlotDraws {
            arrival: Vec::with_capacity(n_users),
            size: Vec::with_capacity(n_users),
            fading: Vec::with_capacity(n_users),
        };
        for _ in 0..n_users {
            draws.arrival.push(rng.random::<f64>());
            draws.size.push(rng.sample(Open01));
            draws.fading.push(Exp1.sample(rng));
        }
        draws
    }

    pub fn len(&self) -> usize {
        self.arrival.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival.is_empty()
    }
}

/// Inverse-CDF Pareto sample: `threshold * u^(-1/shape)` for `u` in `(0, 1)`.
#[inline]
pub fn pareto_sample(threshold: f64, shape: f64, u: f64) -> f64 {
    threshold * u.powf(-1.0 / shape)
}

/// Arrival flag and task size for one user.
#[inline]
pub fn sample_task(user: &UserSpec, arrival_u: f64, size_u: f64) -> (bool, f64) {
    if arrival_u < user.arrival_prob {
        (true, pareto_sample(user.threshold_bits, user.pareto_shape, size_u))
    } else {
        (false, 0.0)
    }
}

/// Arrival flags and sizes for every user.
pub fn sample_tasks(scenario: &Scenario, draws: &SlotDraws) -> (Vec<bool>, Vec<f64>) {
    scenario
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| sample_task(u, draws.arrival[i], draws.size[i]))
        .unzip()
}

/// Restricts an allocation row to linked nodes and renormalizes it.
///
/// When the row has no mass on any linked node the result is uniform over the
/// node's neighborhood.
pub fn masked_compute_row(links: &[f64], shares: &[f64]) -> Vec<f64> {
    let total: f64 = links.iter().zip(shares).map(|(l, c)| l * c).sum();
    if total > 0.0 {
        links.iter().zip(shares).map(|(l, c)| l * c / total).collect()
    } else {
        let degree: f64 = links.iter().sum();
        links.iter().map(|l| l / degree).collect()
    }
}

/// Compute frequency available to each node, Hz.
pub fn node_compute_hz(action: &Action, graph: &Graph, compute_hz: f64) -> Vec<f64> {
    (0..graph.n_nodes())
        .map(|n| {
            let shares = masked_compute_row(graph.adjacency.row(n), &action.node_compute[n]);
            shares
                .iter()
                .zip(graph.edge_weights.row(n))
                .map(|(c, w)| w * c * compute_hz)
                .sum()
        })
        .collect()
}

/// Converts an allocated frequency into a computing speed.
#[inline]
pub fn compute_speed(freq_hz: f64, cycles_per_bit: f64, orientation: RcOrientation) -> f64 {
    match orientation {
        RcOrientation::FreqOverCycles => freq_hz / cycles_per_bit,
        RcOrientation::CyclesOverFreq => cycles_per_bit / freq_hz,
    }
}

/// Per-user computing speed in bits/s, global user order.
pub fn effective_compute(action: &Action, scenario: &Scenario) -> Vec<f64> {
    let phys = &scenario.physics;
    let per_node = node_compute_hz(action, &scenario.graph, phys.compute_hz);
    let mut out = vec![0.0; scenario.n_users()];
    for (n, node) in scenario.nodes.iter().enumerate() {
        for (s, slice) in node.slices.iter().enumerate() {
            let slice_hz = action.slice_compute[n][s] * per_node[n];
            for (k, &u) in slice.users.iter().enumerate() {
                let user_hz = action.user_compute[n][s][k] * slice_hz;
                out[u] = compute_speed(user_hz, phys.cycles_per_bit, phys.rc_orientation);
            }
        }
    }
    out
}

/// Signal-to-noise ratio with transmit power proportional to the RB count.
///
/// The RB count cancels, so the value depends on the gain only. With zero RBs
/// the cancelled form is returned.
#[inline]
pub fn snr(gain: f64, rbs: f64, phys: &Physics) -> f64 {
    if rbs > 0.0 {
        let power = phys.rb_power_w * rbs;
        power * gain / (phys.noise_w_per_hz * rbs * phys.rb_bandwidth_hz)
    } else {
        phys.rb_power_w * gain / (phys.noise_w_per_hz * phys.rb_bandwidth_hz)
    }
}

/// Shannon rate over `rbs` resource blocks, bits/s.
#[inline]
pub fn transmit_rate(rbs: f64, gamma: f64, phys: &Physics) -> f64 {
    rbs * phys.rb_bandwidth_hz * (1.0 + gamma).log2()
}

/// Resource blocks per user, global user order.
pub fn user_rbs(action: &Action, scenario: &Scenario) -> Vec<f64> {
    let mut out = vec![0.0; scenario.n_users()];
    for (n, node) in scenario.nodes.iter().enumerate() {
        for (s, slice) in node.slices.iter().enumerate() {
            let slice_rbs = action.slice_rb[n][s] * scenario.physics.rb_count;
            for (k, &u) in slice.users.iter().enumerate() {
                out[u] = action.user_rb[n][s][k] * slice_rbs;
            }
        }
    }
    out
}

/// Per-user transmit rate and SNR for the given channel gains.
pub fn effective_rate(action: &Action, scenario: &Scenario, gains: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let phys = &scenario.physics;
    user_rbs(action, scenario)
        .into_iter()
        .zip(gains)
        .map(|(rbs, &h)| {
            let gamma = snr(h, rbs, phys);
            (transmit_rate(rbs, gamma, phys), gamma)
        })
        .unzip()
}

/// Computing-queue and transmission-queue backlogs after one slot.
///
/// Arrivals enter the computing queue before service within the slot.
#[inline]
pub fn update_queues(cq: f64, tq: f64, task: f64, rc: f64, rt: f64, phys: &Physics) -> (f64, f64) {
    let dt = phys.slot_seconds;
    let cq_next = (cq + task - rc * dt).max(0.0);
    let tq_next = match phys.tq_update {
        TqUpdate::ComputeMinusRadio => (tq + (rc - rt) * dt).max(0.0),
        TqUpdate::RadioMinusCompute => (tq + (rt - rc) * dt).max(0.0),
    };
    (cq_next, tq_next)
}

/// Completion latency `(Q + V) / min(RC, RT)`.
///
/// An empty backlog completes immediately; a positive backlog with no
/// service never completes.
#[inline]
pub fn latency(cq: f64, tq: f64, rc: f64, rt: f64) -> f64 {
    let backlog = cq + tq;
    if backlog == 0.0 {
        return 0.0;
    }
    let rate = rc.min(rt);
    if rate > 0.0 {
        backlog / rate
    } else {
        f64::INFINITY
    }
}

/// SLA satisfaction rate; 1 when no task arrived.
#[inline]
pub fn satisfaction_rate(satisfied: usize, generated: usize) -> f64 {
    if generated == 0 {
        1.0
    } else {
        satisfied as f64 / generated as f64
    }
}

/// Channel gain `g * d^-beta`.
#[inline]
pub fn channel_gain(fading: f64, distance_m: f64, beta: f64) -> f64 {
    fading * distance_m.powf(-beta)
}
