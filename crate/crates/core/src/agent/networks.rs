use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autonet::{Activation, AutonetError, Dense, GcnLayer, Mlp, Module, Tape, Tensor, Var};

use super::layout::ActionLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Dense,
    Gcn,
}

/// Network widths shared by every learning agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub actor_hidden: usize,
    /// Graph layers for the GCN actor, hidden layers for the dense actor.
    pub actor_depth: usize,
    pub critic_hidden: Vec<usize>,
    /// When set, actor logits pass through `b * tanh(x / b)` before noise.
    pub logit_bound: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            actor_hidden: 64,
            actor_depth: 2,
            critic_hidden: vec![128, 64],
            logit_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ActorBody {
    Gcn { layers: Vec<GcnLayer>, head: Dense },
    Dense(Mlp),
}

/// Policy network mapping node features (and the previous action) to
/// per-group simplexes.
///
/// The input is always `layout.feature_width()` wide per node: the
/// observation row followed by that node's block of the previous action.
/// Without recurrence the previous-action block is zero, so the output does
/// not depend on it and both variants have the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub architecture: Architecture,
    pub recurrent: bool,
    pub layout: ActionLayout,
    pub logit_bound: Option<f64>,
    body: ActorBody,
}

impl ActorNet {
    pub fn new(
        architecture: Architecture,
        recurrent: bool,
        layout: ActionLayout,
        config: &NetworkConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let f = layout.feature_width();
        let k = layout.block();
        let h = config.actor_hidden;
        let body = match architecture {
            Architecture::Gcn => {
                let layers = (0..config.actor_depth)
                    .map(|i| GcnLayer::new(if i == 0 { f } else { h }, h, Activation::Relu, rng))
                    .collect();
                let head_in = if config.actor_depth == 0 { f } else { h };
                ActorBody::Gcn {
                    layers,
                    head: Dense::new(head_in, k, Activation::Identity, rng),
                }
            }
            Architecture::Dense => {
                let n = layout.n_nodes;
                let mut widths = vec![n * f];
                widths.extend(std::iter::repeat_n(h, config.actor_depth));
                widths.push(n * k);
                ActorBody::Dense(Mlp::new(&widths, Activation::Relu, Activation::Identity, rng))
            }
        };
        ActorNet {
            architecture,
            recurrent,
            layout,
            logit_bound: config.logit_bound,
            body,
        }
    }

    /// Node-feature rows `[N, F]` for one sample, flattened.
    pub fn input(&self, obs: &[f64], prev_action: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let (w, k) = (l.obs_width, l.block());
        let mut out = Vec::with_capacity(l.n_nodes * (w + k));
        for n in 0..l.n_nodes {
            out.extend_from_slice(&obs[n * w..(n + 1) * w]);
            if self.recurrent {
                out.extend_from_slice(&prev_action[n * k..(n + 1) * k]);
            } else {
                out.extend(std::iter::repeat_n(0.0, k));
            }
        }
        out
    }

    /// Raw outputs `[batch, N * K]` before exploration noise and softmax.
    ///
    /// `input` stacks `batch` samples of `N` feature rows each.
    pub fn logits(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        propagation: Var,
        input: Var,
        batch: usize,
    ) -> Result<Var, AutonetError> {
        let l = &self.layout;
        let raw = match &self.body {
            ActorBody::Gcn { layers, head } => {
                let mut h = input;
                for (i, layer) in layers.iter().enumerate() {
                    h = layer.forward(tape, bound[i], propagation, h)?;
                }
                let out = head.forward(tape, &bound[layers.len()..], h)?;
                tape.reshape(out, batch, l.flat_len())?
            }
            ActorBody::Dense(mlp) => {
                let x = tape.reshape(input, batch, l.n_nodes * l.feature_width())?;
                mlp.forward(tape, bound, x)?
            }
        };
        match self.logit_bound {
            Some(b) => {
                let x = tape.scale(raw, 1.0 / b);
                let t = tape.activate(x, Activation::Tanh)?;
                Ok(tape.scale(t, b))
            }
            None => Ok(raw),
        }
    }

    /// Decoded simplexes `[batch, N * K]`; `noise` is added to the logits.
    pub fn policy(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        propagation: Var,
        input: Var,
        noise: Option<Var>,
        batch: usize,
    ) -> Result<Var, AutonetError> {
        let mut z = self.logits(tape, bound, propagation, input, batch)?;
        if let Some(noise) = noise {
            z = tape.add(z, noise)?;
        }
        tape.activate(z, Activation::GroupSoftmax(self.layout.groups(batch)))
    }
}

impl Module for ActorNet {
    fn params(&self) -> Vec<&Tensor> {
        match &self.body {
            ActorBody::Gcn { layers, head } => layers.iter().flat_map(|l| l.params()).chain(head.params()).collect(),
            ActorBody::Dense(mlp) => mlp.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match &mut self.body {
            ActorBody::Gcn { layers, head } => layers
                .iter_mut()
                .flat_map(|l| l.params_mut())
                .chain(head.params_mut())
                .collect(),
            ActorBody::Dense(mlp) => mlp.params_mut(),
        }
    }
}

/// Dense value network over the flattened observation and action.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub mlp: Mlp,
}

impl CriticNet {
    pub fn new(layout: &ActionLayout, config: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let mut widths = vec![layout.n_nodes * layout.obs_width + layout.flat_len()];
        widths.extend_from_slice(&config.critic_hidden);
        widths.push(1);
        CriticNet {
            mlp: Mlp::new(&widths, Activation::Relu, Activation::Identity, rng),
        }
    }

    /// `Q` values `[batch, 1]` for observations `[batch, N * F_obs]` and
    /// actions `[batch, N * K]`.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], obs: Var, action: Var) -> Result<Var, AutonetError> {
        let x = tape.concat(&[obs, action], 1)?;
        self.mlp.forward(tape, bound, x)
    }
}

impl Module for CriticNet {
    fn params(&self) -> Vec<&Tensor> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut()
    }
}
