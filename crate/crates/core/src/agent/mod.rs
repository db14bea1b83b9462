//! Actor-critic agents, the random baseline, and the training and
//! evaluation loops.

mod ddpg;
mod layout;
mod networks;
mod replay;

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::autonet::{activate, Activation, AutonetError, Module};
use crate::env::{Action, EnvError, Environment};
use crate::topology::{GcnOperator, SquareMatrix};

pub use ddpg::{actor_objective, critic_loss, critic_target, DdpgAgent, TrainingConfig};
pub use layout::{ActionLayout, Pads};
pub use networks::{ActorNet, Architecture, CriticNet, NetworkConfig};
pub use replay::{Batch, ReplayBuffer, Transition};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("non-finite {what} at episode {episode}, step {step}")]
    NonFinite { what: String, episode: usize, step: usize },
    #[error(transparent)]
    Net(#[from] AutonetError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// The learning agents differ only in actor architecture and whether the
/// previous action is fed back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Rgrl,
    GcnRl,
    DenseRrl,
    DenseRl,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Rgrl,
        AgentKind::GcnRl,
        AgentKind::DenseRrl,
        AgentKind::DenseRl,
        AgentKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Rgrl => "rgrl",
            AgentKind::GcnRl => "gcn-rl",
            AgentKind::DenseRrl => "dense-rrl",
            AgentKind::DenseRl => "dense-rl",
            AgentKind::Random => "random",
        }
    }

    /// `None` for the random baseline.
    pub fn architecture(self) -> Option<Architecture> {
        match self {
            AgentKind::Rgrl | AgentKind::GcnRl => Some(Architecture::Gcn),
            AgentKind::DenseRrl | AgentKind::DenseRl => Some(Architecture::Dense),
            AgentKind::Random => None,
        }
    }

    pub fn recurrent(self) -> bool {
        matches!(self, AgentKind::Rgrl | AgentKind::DenseRrl)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown agent `{s}`; expected one of rgrl, gcn-rl, dense-rrl, dense-rl, random"))
    }
}

/// Network shapes and input encoding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub network: NetworkConfig,
    pub pads: Pads,
    pub gcn_operator: GcnOperator,
}

/// Uniform draws on every simplex, i.e. flat Dirichlet samples.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    layout: ActionLayout,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(layout: ActionLayout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        RandomAgent { layout, rng }
    }

    /// Normalized exponential draws, passed through the same group softmax
    /// as the learned policies so padding and projection match.
    pub fn act(&mut self) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.layout.flat_len())
            .map(|_| {
                let e: f64 = Exp1.sample(&mut self.rng);
                e.ln()
            })
            .collect();
        activate(&logits, &Activation::GroupSoftmax(self.layout.groups(1)))
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Agent {
    Learner(Box<DdpgAgent>),
    Random(RandomAgent),
}

impl Agent {
    pub fn new(
        kind: AgentKind,
        layout: ActionLayout,
        propagation: &SquareMatrix,
        network: &NetworkConfig,
        training: &TrainingConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        Ok(match kind.architecture() {
            Some(arch) => Agent::Learner(Box::new(DdpgAgent::new(
                arch,
                kind.recurrent(),
                layout,
                propagation,
                network,
                training,
                seed,
            )?)),
            None => Agent::Random(RandomAgent::new(layout, seed)),
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Learner(a) => match (a.actor.architecture, a.actor.recurrent) {
                (Architecture::Gcn, true) => AgentKind::Rgrl,
                (Architecture::Gcn, false) => AgentKind::GcnRl,
                (Architecture::Dense, true) => AgentKind::DenseRrl,
                (Architecture::Dense, false) => AgentKind::DenseRl,
            },
            Agent::Random(_) => AgentKind::Random,
        }
    }

    pub fn layout(&self) -> &ActionLayout {
        match self {
            Agent::Learner(a) => a.layout(),
            Agent::Random(r) => &r.layout,
        }
    }

    pub fn act(&mut self, obs: &[f64], prev: &[f64], sigma: f64) -> Result<Vec<f64>, AgentError> {
        match self {
            Agent::Learner(a) => a.act(obs, prev, sigma),
            Agent::Random(r) => Ok(r.act()),
        }
    }

    /// Actor parameters; zero for the random baseline.
    pub fn actor_param_count(&self) -> usize {
        match self {
            Agent::Learner(a) => a.actor.param_count(),
            Agent::Random(_) => 0,
        }
    }

    pub fn critic_param_count(&self) -> usize {
        match self {
            Agent::Learner(a) => a.critic.param_count(),
            Agent::Random(_) => 0,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    /// Mean over the episode's update rounds; empty before replay fills.
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub sigma: f64,
}

fn episode_seeds(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn finite(value: f64, what: &str, episode: usize, step: usize) -> Result<f64, AgentError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AgentError::NonFinite {
            what: what.into(),
            episode,
            step,
        })
    }
}

/// Runs `config.episodes` episodes of interaction and updates.
///
/// Each step observes, acts with exploration noise, stores the transition
/// and, once the buffer holds a batch, updates the critic and then the actor.
/// A non-finite loss stops training with an error naming where it happened.
pub fn train(env: &mut Environment, agent: &mut DdpgAgent, config: &TrainingConfig) -> Result<Vec<EpisodeLog>, AgentError> {
    config.validate()?;
    let layout = agent.layout().clone();
    let steps = config.steps_per_episode.unwrap_or(env.scenario().config.window);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut replay_rng = episode_seeds(config.seed, 2);
    let mut seeds = episode_seeds(config.seed, 3);
    let min_fill = config.critic_batch.max(config.actor_batch);
    let mut sigma = config.sigma;
    let mut env_steps = 0usize;
    let mut rounds = 0usize;
    let mut log = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        env.reset(seeds.next_u64());
        let mut prev = layout.uniform();
        let mut obs = env.observe_padded(layout.pad_users).features;
        let mut rewards = Vec::with_capacity(steps);
        let mut critic_losses = Vec::new();
        let mut objectives = Vec::new();
        for step in 0..steps {
            let action = agent.act(&obs, &prev, sigma)?;
            let result = env.step(&layout.decode(&action)?)?;
            let next_obs = env.observe_padded(layout.pad_users).features;
            rewards.push(result.reward);
            buffer.push(Transition {
                prev_action: prev,
                obs,
                action: action.clone(),
                reward: result.reward,
                next_obs: next_obs.clone(),
            });
            env_steps += 1;
            if env_steps.is_multiple_of(config.update_every) && buffer.len() >= min_fill {
                let batch = buffer.sample(&mut replay_rng, config.critic_batch).expect("buffer filled");
                let loss = agent.critic_update(&batch, config.discount)?;
                critic_losses.push(finite(loss, "critic loss", episode, step)?);
                let batch = buffer.sample(&mut replay_rng, config.actor_batch).expect("buffer filled");
                let objective = agent.actor_update(&batch)?;
                objectives.push(finite(objective, "actor objective", episode, step)?);
                rounds += 1;
                if rounds.is_multiple_of(config.target_period) {
                    agent.soft_update_targets(config.tau);
                }
            }
            prev = action;
            obs = next_obs;
        }
        let entry = EpisodeLog {
            episode,
            mean_reward: mean(&rewards).unwrap_or(0.0),
            critic_loss: mean(&critic_losses),
            actor_objective: mean(&objectives),
            sigma,
        };
        log::debug!(
            "episode {episode}: reward {:.4}, critic loss {:?}, sigma {sigma:.4}",
            entry.mean_reward,
            entry.critic_loss
        );
        log.push(entry);
        sigma = (sigma * config.sigma_decay).max(config.sigma_min);
    }
    Ok(log)
}

/// Noise-free rollouts; returns each episode's mean per-step SSR.
///
/// `on_action` sees every executed action.
pub fn evaluate(
    env: &mut Environment,
    agent: &mut Agent,
    episodes: usize,
    steps: usize,
    seed: u64,
    mut on_action: impl FnMut(&Action),
) -> Result<Vec<f64>, AgentError> {
    let layout = agent.layout().clone();
    let mut seeds = episode_seeds(seed, 4);
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        env.reset(seeds.next_u64());
        let mut prev = layout.uniform();
        let mut total = 0.0;
        for _ in 0..steps {
            let obs = env.observe_padded(layout.pad_users).features;
            let flat = agent.act(&obs, &prev, 0.0)?;
            let action = layout.decode(&flat)?;
            on_action(&action);
            total += env.step(&action)?.reward;
            prev = flat;
        }
        out.push(if steps == 0 { 0.0 } else { total / steps as f64 });
    }
    Ok(out)
}
