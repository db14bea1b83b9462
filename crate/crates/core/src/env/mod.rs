//! The discrete-time slicing system as a Markov decision process.
//!
//! One [`Environment`] owns a [`Scenario`], the evolving [`SystemState`] and
//! its own seeded random stream. Each call to [`Environment::step`] applies a
//! hybrid [`Action`], draws the slot's tasks and fading, advances the queues
//! and returns the slot's SLA satisfaction rate as the reward.

mod action;
mod config;
pub mod dynamics;
mod scenario;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{Action, SIMPLEX_TOL};
pub use config::{
    dbm_to_watts, FeatureTransform, Geometry, Physics, RcOrientation, ScenarioConfig, Service, ServiceProfile, Services,
    TqUpdate,
};
pub use dynamics::SlotDraws;
pub use scenario::{NodeSpec, Scenario, SliceDef, SliceSpec, UserParams, UserSpec};

use crate::topology::SquareMatrix;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("could not parse configuration: {0}")]
    Parse(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("simplex violation: {0}")]
    Simplex(String),
}

/// Dynamic per-user state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    /// Computing-queue backlog `Q`, bits.
    pub cq_backlog: f64,
    /// Transmission-queue backlog `V`, bits.
    pub tq_backlog: f64,
    /// Channel gain `h` for the current slot.
    pub channel_gain: f64,
    pub distance_m: f64,
    /// Whether a task arrived in the last slot.
    pub arrival: bool,
    /// Size of the last slot's task, bits (0 without arrival).
    pub task_size: f64,
    /// Most recent task sizes, newest first.
    pub recent: VecDeque<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Slots elapsed since the last reset.
    pub t: usize,
    pub users: Vec<UserState>,
    pub weighted_adjacency: SquareMatrix,
}

impl SystemState {
    pub fn gains(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.channel_gain).collect()
    }
}

/// Node-feature matrix, one padded row per edge node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub nodes: usize,
    pub width: usize,
    /// Row-major `nodes x width`.
    pub features: Vec<f64>,
    pub weighted_adjacency: SquareMatrix,
}

impl Observation {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.features[n * self.width..(n + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: SystemState,
    pub reward: f64,
    pub satisfied: usize,
    pub generated: usize,
    /// Completion latency per user, seconds; infinite when unserved.
    pub latencies: Vec<f64>,
    pub compute_rates: Vec<f64>,
    pub transmit_rates: Vec<f64>,
}

/// Features carried per user slot before the optional task-size window.
pub const FEATURES_PER_USER: usize = 3;

pub struct Environment {
    scenario: Scenario,
    state: SystemState,
    rng: ChaCha8Rng,
}

impl Environment {
    /// Builds an environment and resets it with `seed`.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        let n = scenario.n_nodes();
        let state = SystemState {
            t: 0,
            users: Vec::new(),
            weighted_adjacency: SquareMatrix::zeros(n),
        };
        let mut env = Environment {
            scenario,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset(seed);
        env
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    /// Overwrites the dynamic state, e.g. to start from chosen backlogs.
    pub fn set_state(&mut self, state: SystemState) -> Result<(), EnvError> {
        if state.users.len() != self.scenario.n_users() {
            return Err(EnvError::Shape(format!(
                "state has {} users, scenario has {}",
                state.users.len(),
                self.scenario.n_users()
            )));
        }
        self.state = state;
        Ok(())
    }

    /// Empties every queue, reseeds the random stream and draws fresh gains.
    pub fn reset(&mut self, seed: u64) -> &SystemState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = self.scenario.physics.pathloss_exponent;
        let users = self
            .scenario
            .users
            .iter()
            .map(|u| {
                let g: f64 = Exp1.sample(&mut self.rng);
                UserState {
                    cq_backlog: 0.0,
                    tq_backlog: 0.0,
                    channel_gain: dynamics::channel_gain(g, u.distance_m, beta),
                    distance_m: u.distance_m,
                    arrival: false,
                    task_size: 0.0,
                    recent: VecDeque::with_capacity(self.scenario.config.obs_window),
                }
            })
            .collect();
        self.state = SystemState {
            t: 0,
            users,
            weighted_adjacency: self.scenario.graph.weighted_adjacency.clone(),
        };
        &self.state
    }

    /// Advances one slot, drawing the slot's randomness from the environment stream.
    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        action.validate(&self.scenario, SIMPLEX_TOL)?;
        let draws = SlotDraws::sample(&mut self.rng, self.scenario.n_users());
        self.step_with_draws(action, &draws)
    }

    /// Advances one slot with externally supplied randomness.
    pub fn step_with_draws(&mut self, action: &Action, draws: &SlotDraws) -> Result<StepResult, EnvError> {
        let sc = &self.scenario;
        if draws.len() != sc.n_users() {
            return Err(EnvError::Shape(format!("{} draws for {} users", draws.len(), sc.n_users())));
        }
        action.validate(sc, SIMPLEX_TOL)?;
        let phys = sc.physics;

        let (arrivals, sizes) = dynamics::sample_tasks(sc, draws);
        let compute_rates = dynamics::effective_compute(action, sc);
        let (transmit_rates, _) = dynamics::effective_rate(action, sc, &self.state.gains());

        let mut latencies = Vec::with_capacity(sc.n_users());
        let mut satisfied = 0;
        let mut generated = 0;
        let window = sc.config.obs_window;
        for (i, user) in self.state.users.iter_mut().enumerate() {
            let (rc, rt) = (compute_rates[i], transmit_rates[i]);
            let (cq, tq) = dynamics::update_queues(user.cq_backlog, user.tq_backlog, sizes[i], rc, rt, &phys);
            let l = dynamics::latency(cq, tq, rc, rt);
            if arrivals[i] {
                generated += 1;
                if l <= sc.latency_req(i) {
                    satisfied += 1;
                }
            }
            user.cq_backlog = cq;
            user.tq_backlog = tq;
            user.arrival = arrivals[i];
            user.task_size = sizes[i];
            if window > 0 {
                if user.recent.len() == window {
                    user.recent.pop_back();
                }
                user.recent.push_front(sizes[i]);
            }
            user.channel_gain = dynamics::channel_gain(draws.fading[i], user.distance_m, phys.pathloss_exponent);
            latencies.push(l);
        }
        self.state.t += 1;

        Ok(StepResult {
            next_state: self.state.clone(),
            reward: dynamics::satisfaction_rate(satisfied, generated),
            satisfied,
            generated,
            latencies,
            compute_rates,
            transmit_rates,
        })
    }

    /// Per-node feature width for a given user padding.
    pub fn feature_width(&self, pad_users: usize) -> usize {
        pad_users * (FEATURES_PER_USER + self.scenario.config.obs_window)
    }

    /// Observation padded to the scenario's largest node.
    pub fn observe(&self) -> Observation {
        self.observe_padded(self.scenario.max_users_per_node())
    }

    /// Node-feature matrix with `pad_users` user slots per row.
    ///
    /// Each user slot holds `[Q, V, h]` (scaled) followed by its recent task
    /// sizes; absent users are zero.
    pub fn observe_padded(&self, pad_users: usize) -> Observation {
        let sc = &self.scenario;
        assert!(
            pad_users >= sc.max_users_per_node(),
            "padding {pad_users} is smaller than the largest node ({})",
            sc.max_users_per_node()
        );
        let window = sc.config.obs_window;
        let slot = FEATURES_PER_USER + window;
        let width = pad_users * slot;
        let mut features = vec![0.0; sc.n_nodes() * width];
        let scale = sc.config.backlog_scale_bits;
        let squash = |bits: f64| match sc.config.feature_transform {
            FeatureTransform::Linear => bits / scale,
            FeatureTransform::Log1p => (bits / scale).ln_1p(),
        };
        for (n, node) in sc.nodes.iter().enumerate() {
            let row = &mut features[n * width..(n + 1) * width];
            let first = node.first_user();
            for k in 0..node.user_count() {
                let u = &self.state.users[first + k];
                let cell = &mut row[k * slot..(k + 1) * slot];
                cell[0] = squash(u.cq_backlog);
                cell[1] = squash(u.tq_backlog);
                cell[2] = u.channel_gain / sc.mean_gain;
                for (w, size) in u.recent.iter().enumerate() {
                    cell[FEATURES_PER_USER + w] = squash(*size);
                }
            }
        }
        Observation {
            nodes: sc.n_nodes(),
            width,
            features,
            weighted_adjacency: self.state.weighted_adjacency.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_graph, build_layout, Graph};

    fn single_node(users_per_slice: &[usize], service: &[Service]) -> Scenario {
        let cfg = ScenarioConfig {
            nodes: 1,
            users: users_per_slice.iter().sum(),
            slices_per_node: [3, 3],
            ..Default::default()
        };
        let graph = build_graph(&build_layout(&cfg, 0).unwrap(), 0, 0.9);
        let slices = users_per_slice
            .iter()
            .zip(service)
            .map(|(&count, &service)| SliceDef {
                service,
                users: (0..count)
                    .map(|_| UserParams {
                        distance_m: 50.0,
                        arrival_prob: 1.0,
                        pareto_shape: 5.0,
                        threshold_bits: 1000.0,
                    })
                    .collect(),
            })
            .collect();
        Scenario::from_slices(cfg, graph, vec![slices]).unwrap()
    }

    fn tiny() -> Scenario {
        single_node(&[2, 2, 2], &[Service::Embb, Service::Mmtc, Service::Urllc])
    }

    #[test]
    fn uniform_action_validates() {
        let sc = tiny();
        Action::uniform(&sc).validate(&sc, SIMPLEX_TOL).unwrap();
    }

    #[test]
    fn rejects_non_simplex_action() {
        let sc = tiny();
        let mut env = Environment::new(sc.clone(), 1);
        let mut a = Action::uniform(&sc);
        a.slice_rb[0][0] += 0.1;
        assert!(matches!(env.step(&a), Err(EnvError::Simplex(_))));
    }

    #[test]
    fn queues_stay_non_negative_and_reward_bounded() {
        let sc = tiny();
        let mut env = Environment::new(sc.clone(), 2);
        let a = Action::uniform(&sc);
        for _ in 0..50 {
            let r = env.step(&a).unwrap();
            assert!((0.0..=1.0).contains(&r.reward));
            assert!(r.satisfied <= r.generated);
            for u in &r.next_state.users {
                assert!(u.cq_backlog >= 0.0 && u.tq_backlog >= 0.0);
                assert!(u.channel_gain > 0.0);
            }
        }
    }

    #[test]
    fn no_arrivals_give_unit_reward() {
        let sc = tiny();
        let mut env = Environment::new(sc.clone(), 3);
        let n = sc.n_users();
        let draws = SlotDraws {
            arrival: vec![1.0; n],
            size: vec![0.5; n],
            fading: vec![1.0; n],
        };
        let r = env.step_with_draws(&Action::uniform(&sc), &draws).unwrap();
        assert_eq!(r.generated, 0);
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn observation_of_empty_queues() {
        let sc = tiny();
        let mut env = Environment::new(sc.clone(), 4);
        let mut state = env.state().clone();
        for u in &mut state.users {
            u.channel_gain = sc.mean_gain;
        }
        env.set_state(state).unwrap();
        let obs = env.observe();
        assert_eq!((obs.nodes, obs.width), (1, 18));
        for k in 0..6 {
            assert_eq!(&obs.features[3 * k..3 * k + 3], &[0.0, 0.0, 1.0]);
        }
        assert_eq!(obs.weighted_adjacency.values, vec![1.0]);
    }

    #[test]
    fn observation_pads_absent_users() {
        let sc = single_node(&[1, 1, 1], &[Service::Embb, Service::Mmtc, Service::Urllc]);
        let env = Environment::new(sc, 5);
        let obs = env.observe_padded(5);
        assert_eq!(obs.width, 15);
        assert!(obs.features[9..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recent_window_tracks_task_sizes() {
        let mut sc = tiny();
        sc.config.obs_window = 2;
        let mut env = Environment::new(sc.clone(), 6);
        let a = Action::uniform(&sc);
        let mut sizes = Vec::new();
        for _ in 0..3 {
            let r = env.step(&a).unwrap();
            sizes.push(r.next_state.users[0].task_size);
        }
        let recent: Vec<f64> = env.state().users[0].recent.iter().copied().collect();
        assert_eq!(recent, vec![sizes[2], sizes[1]]);
        assert_eq!(env.observe().width, 6 * 5);
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let layout = build_layout(&cfg, 1).unwrap();
        let graph: Graph = build_graph(&layout, cfg.max_neighbors, cfg.coop_penalty);
        let sc = Scenario::sample(&cfg, graph, 1).unwrap();
        let a = Action::uniform(&sc);
        let run = |seed| {
            let mut env = Environment::new(sc.clone(), seed);
            (0..5).map(|_| env.step(&a).unwrap().reward).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }
}
