use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autonet::{checkpoint, soft_update, Adam, AdamConfig, Module, Tape, Tensor};
use crate::topology::SquareMatrix;

use super::networks::{ActorNet, Architecture, CriticNet, NetworkConfig};
use super::replay::Batch;
use super::{ActionLayout, AgentError};

/// Exploration, replay and update schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub episodes: usize,
    /// Defaults to the scenario's window length.
    pub steps_per_episode: Option<usize>,
    pub discount: f64,
    pub sigma: f64,
    /// Multiplied into `sigma` after every episode.
    pub sigma_decay: f64,
    pub sigma_min: f64,
    pub buffer_capacity: usize,
    pub critic_batch: usize,
    pub actor_batch: usize,
    pub tau: f64,
    /// Soft-update the targets after this many update rounds.
    pub target_period: usize,
    /// Run an update round every this many environment steps.
    pub update_every: usize,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            episodes: 500,
            steps_per_episode: None,
            discount: 0.9,
            sigma: 0.2,
            sigma_decay: 0.995,
            sigma_min: 0.0,
            buffer_capacity: 100_000,
            critic_batch: 64,
            actor_batch: 64,
            tau: 0.005,
            target_period: 1,
            update_every: 1,
            actor_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |field: &str, reason: &str| {
            Err(AgentError::Config {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1]");
        }
        if !(self.sigma >= 0.0 && self.sigma_min >= 0.0) {
            return bad("sigma", "must be non-negative");
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return bad("sigma_decay", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", "must lie in [0, 1]");
        }
        if self.critic_batch == 0 || self.actor_batch == 0 {
            return bad("critic_batch", "batch sizes must be positive");
        }
        if self.buffer_capacity < self.critic_batch.max(self.actor_batch) {
            return bad("buffer_capacity", "must hold at least one batch");
        }
        if self.target_period == 0 || self.update_every == 0 {
            return bad("target_period", "periods must be positive");
        }
        if self.steps_per_episode == Some(0) {
            return bad("steps_per_episode", "must be positive");
        }
        for (field, adam) in [("actor_adam", &self.actor_adam), ("critic_adam", &self.critic_adam)] {
            if !(adam.lr > 0.0 && adam.eps > 0.0 && (0.0..1.0).contains(&adam.beta1) && (0.0..1.0).contains(&adam.beta2)) {
                return bad(field, "needs lr, eps > 0 and betas in [0, 1)");
            }
        }
        Ok(())
    }
}

/// Bootstrapped critic target `r + discount * Q'`.
#[inline]
pub fn critic_target(reward: f64, next_q: f64, discount: f64) -> f64 {
    reward + discount * next_q
}

fn propagation_tensor(p: &SquareMatrix) -> Tensor {
    Tensor::matrix(p.n, p.n, p.values.clone())
}

fn obs_tensor(layout: &ActionLayout, batch: usize, values: &[f64]) -> Tensor {
    Tensor::matrix(batch, layout.n_nodes * layout.obs_width, values.to_vec())
}

fn action_tensor(layout: &ActionLayout, batch: usize, values: &[f64]) -> Tensor {
    Tensor::matrix(batch, layout.flat_len(), values.to_vec())
}

fn actor_input(actor: &ActorNet, batch: usize, obs: &[f64], prev: &[f64]) -> Tensor {
    let l = &actor.layout;
    let (ow, aw) = (l.n_nodes * l.obs_width, l.flat_len());
    let mut rows = Vec::with_capacity(batch * l.n_nodes * l.feature_width());
    for b in 0..batch {
        rows.extend(actor.input(&obs[b * ow..(b + 1) * ow], &prev[b * aw..(b + 1) * aw]));
    }
    Tensor::matrix(batch * l.n_nodes, l.feature_width(), rows)
}

/// Mean squared error between `Q(o, a)` and `targets` over the batch.
///
/// With `store_grads` the parameter gradients are written into `critic`.
pub fn critic_loss(critic: &mut CriticNet, layout: &ActionLayout, batch: &Batch, targets: &[f64], store_grads: bool) -> Result<f64, AgentError> {
    let mut tape = Tape::new();
    let bound = critic.bind(&mut tape);
    let o = tape.leaf(obs_tensor(layout, batch.size, &batch.obs));
    let a = tape.leaf(action_tensor(layout, batch.size, &batch.action));
    let q = critic.forward(&mut tape, &bound, o, a)?;
    let y = tape.leaf(Tensor::matrix(batch.size, 1, targets.to_vec()));
    let diff = tape.sub(q, y)?;
    let sq = tape.mul(diff, diff)?;
    let loss = tape.mean(sq);
    let value = tape.value(loss).values()[0];
    if store_grads {
        let grads = tape.backward(loss)?;
        critic.store_grads(&grads, &bound)?;
    }
    Ok(value)
}

/// Mean `Q(o, pi(o, a_prev))` over the batch.
///
/// With `store_grads` the gradient of the negated objective is written into
/// `actor`; the critic only passes gradients through.
pub fn actor_objective(
    actor: &mut ActorNet,
    critic: &CriticNet,
    propagation: &Tensor,
    batch: &Batch,
    store_grads: bool,
) -> Result<f64, AgentError> {
    let mut tape = Tape::new();
    let ab = actor.bind(&mut tape);
    let cb = critic.bind(&mut tape);
    let p = tape.leaf(propagation.clone());
    let input = tape.leaf(actor_input(actor, batch.size, &batch.obs, &batch.prev_action));
    let a = actor.policy(&mut tape, &ab, p, input, None, batch.size)?;
    let o = tape.leaf(obs_tensor(&actor.layout, batch.size, &batch.obs));
    let q = critic.forward(&mut tape, &cb, o, a)?;
    let objective = tape.mean(q);
    let value = tape.value(objective).values()[0];
    if store_grads {
        let loss = tape.scale(objective, -1.0);
        let grads = tape.backward(loss)?;
        actor.store_grads(&grads, &ab)?;
    }
    Ok(value)
}

/// Actor-critic learner with target networks.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub target_actor: ActorNet,
    pub target_critic: CriticNet,
    actor_opt: Adam,
    critic_opt: Adam,
    propagation: Tensor,
    noise_rng: ChaCha8Rng,
}

impl DdpgAgent {
    pub fn new(
        architecture: Architecture,
        recurrent: bool,
        layout: ActionLayout,
        propagation: &SquareMatrix,
        network: &NetworkConfig,
        training: &TrainingConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        if propagation.n != layout.n_nodes {
            return Err(AgentError::Dimension(format!(
                "{}-node propagation operator for a {}-node layout",
                propagation.n, layout.n_nodes
            )));
        }
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let actor = ActorNet::new(architecture, recurrent, layout.clone(), network, &mut init);
        let critic = CriticNet::new(&layout, network, &mut init);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(1);
        Ok(DdpgAgent {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt: Adam::new(training.actor_adam),
            critic_opt: Adam::new(training.critic_adam),
            propagation: propagation_tensor(propagation),
            noise_rng,
        })
    }

    pub fn layout(&self) -> &ActionLayout {
        &self.actor.layout
    }

    pub fn propagation(&self) -> &Tensor {
        &self.propagation
    }

    fn check_dims(&self, obs: &[f64], prev: &[f64]) -> Result<(), AgentError> {
        let l = self.layout();
        if obs.len() != l.n_nodes * l.obs_width || prev.len() != l.flat_len() {
            return Err(AgentError::Dimension(format!(
                "observation of {} and previous action of {} for a layout of {} and {}",
                obs.len(),
                prev.len(),
                l.n_nodes * l.obs_width,
                l.flat_len()
            )));
        }
        Ok(())
    }

    /// Flat action for one observation. Gaussian noise of standard deviation
    /// `sigma` perturbs the logits; `sigma = 0` draws nothing.
    pub fn act(&mut self, obs: &[f64], prev: &[f64], sigma: f64) -> Result<Vec<f64>, AgentError> {
        self.check_dims(obs, prev)?;
        let mut tape = Tape::new();
        let bound = self.actor.bind(&mut tape);
        let p = tape.leaf(self.propagation.clone());
        let input = tape.leaf(actor_input(&self.actor, 1, obs, prev));
        let noise = if sigma > 0.0 {
            let len = self.layout().flat_len();
            let values = (0..len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut self.noise_rng);
                    sigma * z
                })
                .collect();
            Some(tape.leaf(Tensor::matrix(1, len, values)))
        } else {
            None
        };
        let out = self.actor.policy(&mut tape, &bound, p, input, noise, 1)?;
        Ok(tape.value(out).values().to_vec())
    }

    /// `Q'(o', pi'(o', a))` from the target networks for every record.
    pub fn target_q(&self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        let mut tape = Tape::new();
        let ab = self.target_actor.bind(&mut tape);
        let cb = self.target_critic.bind(&mut tape);
        let p = tape.leaf(self.propagation.clone());
        let input = tape.leaf(actor_input(&self.target_actor, batch.size, &batch.next_obs, &batch.action));
        let next_a = self.target_actor.policy(&mut tape, &ab, p, input, None, batch.size)?;
        let o = tape.leaf(obs_tensor(self.layout(), batch.size, &batch.next_obs));
        let q = self.target_critic.forward(&mut tape, &cb, o, next_a)?;
        Ok(tape.value(q).values().to_vec())
    }

    /// One Adam step on the critic; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &Batch, discount: f64) -> Result<f64, AgentError> {
        let targets: Vec<f64> = self
            .target_q(batch)?
            .into_iter()
            .zip(&batch.reward)
            .map(|(q, &r)| critic_target(r, q, discount))
            .collect();
        let layout = self.actor.layout.clone();
        let loss = critic_loss(&mut self.critic, &layout, batch, &targets, true)?;
        self.critic_opt.step(&mut self.critic)?;
        Ok(loss)
    }

    /// One Adam ascent step on the actor; returns the objective before the step.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let objective = actor_objective(&mut self.actor, &self.critic, &self.propagation, batch, true)?;
        self.actor_opt.step(&mut self.actor)?;
        Ok(objective)
    }

    pub fn soft_update_targets(&mut self, tau: f64) {
        soft_update(&mut self.target_actor, &self.actor, tau);
        soft_update(&mut self.target_critic, &self.critic, tau);
    }

    fn named(&self) -> Vec<(String, &Tensor)> {
        let nets: [(&str, Vec<&Tensor>); 4] = [
            ("actor", self.actor.params()),
            ("critic", self.critic.params()),
            ("target_actor", self.target_actor.params()),
            ("target_critic", self.target_critic.params()),
        ];
        nets.into_iter()
            .flat_map(|(prefix, ps)| ps.into_iter().enumerate().map(move |(i, t)| (format!("{prefix}.{i}"), t)))
            .collect()
    }

    pub fn save(&self, stem: &Path, metadata: serde_json::Value) -> Result<(), AgentError> {
        checkpoint::save(stem, &self.named(), metadata)?;
        Ok(())
    }

    /// Replaces every parameter with the checkpoint's; shapes must agree.
    pub fn load(&mut self, stem: &Path) -> Result<serde_json::Value, AgentError> {
        let (manifest, tensors) = checkpoint::load(stem)?;
        let expected: Vec<(String, Vec<usize>)> =
            self.named().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        let found: Vec<(String, Vec<usize>)> = tensors.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
        if expected != found {
            return Err(AgentError::Dimension("checkpoint does not match the agent's networks".into()));
        }
        let mut values = tensors.into_iter().map(|(_, t)| t);
        for net in [
            self.actor.params_mut(),
            self.critic.params_mut(),
            self.target_actor.params_mut(),
            self.target_critic.params_mut(),
        ] {
            for p in net {
                *p = values.next().expect("counted above");
            }
        }
        Ok(manifest.metadata)
    }
}
