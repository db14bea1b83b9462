use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, Physics, ScenarioConfig, Service};
use crate::topology::Graph;

/// Static per-user parameters, fixed for the lifetime of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub node: usize,
    pub slice: usize,
    /// Distance to the serving node, meters.
    pub distance_m: f64,
    /// Per-slot arrival probability `kappa`.
    pub arrival_prob: f64,
    /// Pareto shape `zeta`.
    pub pareto_shape: f64,
    /// Pareto threshold, bits.
    pub threshold_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub service: Service,
    pub latency_req_s: f64,
    /// Global user indices, contiguous and ascending.
    pub users: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub slices: Vec<SliceSpec>,
}

impl NodeSpec {
    pub fn user_count(&self) -> usize {
        self.slices.iter().map(|s| s.users.len()).sum()
    }

    /// Global index of the node's first user.
    pub fn first_user(&self) -> usize {
        self.slices.first().and_then(|s| s.users.first()).copied().unwrap_or(0)
    }
}

/// Parameters for one user when a scenario is assembled by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct UserParams {
    pub distance_m: f64,
    pub arrival_prob: f64,
    pub pareto_shape: f64,
    pub threshold_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceDef {
    pub service: Service,
    pub users: Vec<UserParams>,
}

/// A fully instantiated system: graph, slices, user sets and constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub physics: Physics,
    pub graph: Graph,
    pub nodes: Vec<NodeSpec>,
    pub users: Vec<UserSpec>,
    /// Mean path gain `d^-beta` over all users, the scale for channel features.
    pub mean_gain: f64,
}

impl Scenario {
    /// Assembles a scenario from explicit slice definitions, one list per node.
    pub fn from_slices(config: ScenarioConfig, graph: Graph, slices: Vec<Vec<SliceDef>>) -> Result<Self, EnvError> {
        if slices.len() != graph.n_nodes() {
            return Err(EnvError::Shape(format!(
                "{} node slice lists for a {}-node graph",
                slices.len(),
                graph.n_nodes()
            )));
        }
        let mut nodes = Vec::with_capacity(slices.len());
        let mut users = Vec::new();
        for (n, defs) in slices.into_iter().enumerate() {
            if defs.is_empty() {
                return Err(EnvError::Shape(format!("node {n} has no slices")));
            }
            let mut node = NodeSpec { slices: Vec::with_capacity(defs.len()) };
            for (s, def) in defs.into_iter().enumerate() {
                if def.users.is_empty() {
                    return Err(EnvError::Shape(format!("slice {s} of node {n} has no users")));
                }
                let ids = (users.len()..users.len() + def.users.len()).collect();
                for p in def.users {
                    users.push(UserSpec {
                        node: n,
                        slice: s,
                        distance_m: p.distance_m,
                        arrival_prob: p.arrival_prob,
                        pareto_shape: p.pareto_shape,
                        threshold_bits: p.threshold_bits,
                    });
                }
                node.slices.push(SliceSpec {
                    service: def.service,
                    latency_req_s: config.services.get(def.service).latency_req_s,
                    users: ids,
                });
            }
            nodes.push(node);
        }
        let beta = config.pathloss_exponent;
        let mean_gain = users.iter().map(|u| u.distance_m.powf(-beta)).sum::<f64>() / users.len() as f64;
        Ok(Scenario {
            physics: config.physics(),
            config,
            graph,
            nodes,
            users,
            mean_gain,
        })
    }

    /// Draws slice counts, service types, user sets and per-user parameters.
    ///
    /// Every node gets at least one slice of each service and every slice at
    /// least one user. Slices are then topped up towards their service's
    /// `min_users` while users remain; leftovers go to uniformly random slices.
    pub fn sample(config: &ScenarioConfig, graph: Graph, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_node = config.users_per_node();
        let mut all = Vec::with_capacity(config.nodes);
        for &n_users in per_node.iter() {
            let [lo, hi] = config.slices_per_node;
            let n_slices = rng.random_range(lo..=hi).min(n_users);
            let mut services: Vec<Service> = Service::ALL.to_vec();
            while services.len() < n_slices {
                services.push(Service::ALL[rng.random_range(0..Service::ALL.len())]);
            }
            services.shuffle(&mut rng);

            let mut counts = vec![1usize; n_slices];
            let mut remaining = n_users - n_slices;
            let mut order: Vec<usize> = (0..n_slices).collect();
            order.shuffle(&mut rng);
            for &s in &order {
                let want = config.services.get(services[s]).min_users.saturating_sub(counts[s]);
                let take = want.min(remaining);
                counts[s] += take;
                remaining -= take;
            }
            for _ in 0..remaining {
                counts[rng.random_range(0..n_slices)] += 1;
            }

            let mut defs = Vec::with_capacity(n_slices);
            for (s, &count) in counts.iter().enumerate() {
                let profile = config.services.get(services[s]);
                let users = (0..count)
                    .map(|_| UserParams {
                        distance_m: sample_ring_radius(&mut rng, config.geometry.user_ring_min_m, config.geometry.user_ring_max_m),
                        arrival_prob: uniform(&mut rng, profile.arrival_prob),
                        pareto_shape: uniform(&mut rng, profile.pareto_shape),
                        threshold_bits: 8.0 * uniform(&mut rng, profile.threshold_bytes),
                    })
                    .collect();
                defs.push(SliceDef { service: services[s], users });
            }
            all.push(defs);
        }
        Self::from_slices(config.clone(), graph, all)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn max_users_per_node(&self) -> usize {
        self.nodes.iter().map(NodeSpec::user_count).max().unwrap_or(0)
    }

    pub fn max_slices_per_node(&self) -> usize {
        self.nodes.iter().map(|n| n.slices.len()).max().unwrap_or(0)
    }

    pub fn latency_req(&self, user: usize) -> f64 {
        let u = &self.users[user];
        self.nodes[u.node].slices[u.slice].latency_req_s
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Radius of a point uniform over the annulus area.
fn sample_ring_radius(rng: &mut impl Rng, r_min: f64, r_max: f64) -> f64 {
    let a = r_min * r_min;
    let b = r_max * r_max;
    (a + (b - a) * rng.random::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_graph, build_layout};

    fn sampled(cfg: &ScenarioConfig, seed: u64) -> Scenario {
        let layout = build_layout(cfg, seed).unwrap();
        let graph = build_graph(&layout, cfg.max_neighbors, cfg.coop_penalty);
        Scenario::sample(cfg, graph, seed).unwrap()
    }

    #[test]
    fn every_node_has_each_service_and_nonempty_slices() {
        let cfg = ScenarioConfig { nodes: 5, users: 60, ..Default::default() };
        for seed in 0..30 {
            let sc = sampled(&cfg, seed);
            assert_eq!(sc.n_users(), 60);
            for node in &sc.nodes {
                assert!((3..=6).contains(&node.slices.len()));
                for service in Service::ALL {
                    assert!(node.slices.iter().any(|s| s.service == service));
                }
                assert!(node.slices.iter().all(|s| !s.users.is_empty()));
            }
        }
    }

    #[test]
    fn users_are_contiguous_per_node() {
        let sc = sampled(&ScenarioConfig::default(), 3);
        let mut next = 0;
        for (n, node) in sc.nodes.iter().enumerate() {
            for (s, slice) in node.slices.iter().enumerate() {
                for &u in &slice.users {
                    assert_eq!(u, next);
                    assert_eq!((sc.users[u].node, sc.users[u].slice), (n, s));
                    next += 1;
                }
            }
        }
    }

    #[test]
    fn user_parameters_respect_ranges() {
        let cfg = ScenarioConfig::default();
        let sc = sampled(&cfg, 11);
        for u in &sc.users {
            assert!(u.distance_m >= 10.0 && u.distance_m <= 100.0);
            let profile = cfg.services.get(sc.nodes[u.node].slices[u.slice].service);
            assert!(u.arrival_prob >= profile.arrival_prob[0] && u.arrival_prob <= profile.arrival_prob[1]);
            assert!(u.threshold_bits >= 8.0 * profile.threshold_bytes[0]);
            assert!(u.threshold_bits <= 8.0 * profile.threshold_bytes[1]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ScenarioConfig::default();
        assert_eq!(sampled(&cfg, 5), sampled(&cfg, 5));
    }
}
