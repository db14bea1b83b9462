//! Central-difference checks of the critic loss and the actor chain.

use mecslice::agent::{
    actor_objective, critic_loss, ActionLayout, ActorNet, Architecture, Batch, CriticNet, NetworkConfig, RandomAgent,
    Transition,
};
use mecslice::autonet::{Module, Tensor};
use mecslice::topology::propagation_operator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;
pub const REL: f64 = 1e-4;

/// Small enough that every network stays within 100 parameters.
pub fn tiny_net() -> NetworkConfig {
    NetworkConfig {
        actor_hidden: 2,
        actor_depth: 1,
        critic_hidden: vec![2],
        logit_bound: None,
    }
}

pub fn random_batch(layout: &ActionLayout, size: usize, rng: &mut ChaCha8Rng) -> Batch {
    let mut policy = RandomAgent::new(layout.clone(), rng.random());
    let obs_len = layout.n_nodes * layout.obs_width;
    let records: Vec<Transition> = (0..size)
        .map(|_| Transition {
            prev_action: policy.act(),
            obs: (0..obs_len).map(|_| rng.random_range(0.0..2.0)).collect(),
            action: policy.act(),
            reward: rng.random(),
            next_obs: (0..obs_len).map(|_| rng.random_range(0.0..2.0)).collect(),
        })
        .collect();
    Batch::from_transitions(records.iter())
}

/// Central differences of `f` with respect to every parameter of `m`.
pub fn numeric_grads<M: Module>(m: &mut M, mut f: impl FnMut(&mut M) -> f64) -> Vec<f64> {
    let count = m.params().len();
    let mut out = Vec::new();
    for p in 0..count {
        let len = m.params()[p].len();
        for i in 0..len {
            let orig = m.params()[p].values()[i];
            m.params_mut()[p].values_mut()[i] = orig + EPS;
            let up = f(m);
            m.params_mut()[p].values_mut()[i] = orig - EPS;
            let down = f(m);
            m.params_mut()[p].values_mut()[i] = orig;
            out.push((up - down) / (2.0 * EPS));
        }
    }
    out
}

fn stored_grads<M: Module>(m: &M) -> Vec<f64> {
    m.params().iter().flat_map(|t| t.grad().expect("gradient stored").to_vec()).collect()
}

fn mismatches(analytic: &[f64], numeric: &[f64], what: &str, seed: u64) -> Vec<String> {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .enumerate()
        .filter(|(_, (a, n))| !super::close(**a, **n, REL))
        .map(|(i, (a, n))| format!("{what} seed {seed} param {i}: analytic {a} numeric {n}"))
        .collect()
}

/// Disagreements for the critic loss on a two-node scenario.
pub fn critic_check(seed: u64) -> Vec<String> {
    let sc = super::three_slice(2);
    let layout = super::layout(&sc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut critic = CriticNet::new(&layout, &tiny_net(), &mut rng);
    assert!(critic.param_count() <= 100);
    let batch = random_batch(&layout, 4, &mut rng);
    let targets: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..2.0)).collect();
    critic_loss(&mut critic, &layout, &batch, &targets, true).unwrap();
    let analytic = stored_grads(&critic);
    let numeric = numeric_grads(&mut critic, |c| critic_loss(c, &layout, &batch, &targets, false).unwrap());
    mismatches(&analytic, &numeric, "critic", seed)
}

/// Disagreements for the actor objective through softmax and critic.
pub fn actor_check(architecture: Architecture, nodes: usize, seed: u64) -> Vec<String> {
    let sc = super::three_slice(nodes);
    let layout = super::layout(&sc);
    let prop = propagation_operator(&sc.graph).matrix;
    let prop = Tensor::matrix(prop.n, prop.n, prop.values);
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut actor = ActorNet::new(architecture, true, layout.clone(), &tiny_net(), &mut rng);
    let critic = CriticNet::new(&layout, &tiny_net(), &mut rng);
    assert!(actor.param_count() <= 100, "{} actor parameters", actor.param_count());
    let batch = random_batch(&layout, 3, &mut rng);
    actor_objective(&mut actor, &critic, &prop, &batch, true).unwrap();
    // stored gradients descend the negated objective
    let analytic: Vec<f64> = stored_grads(&actor).iter().map(|g| -g).collect();
    let numeric = numeric_grads(&mut actor, |a| actor_objective(a, &critic, &prop, &batch, false).unwrap());
    mismatches(&analytic, &numeric, "actor", seed)
}
