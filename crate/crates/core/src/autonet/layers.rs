use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Activation, Gradients, Tape, Var};
use super::{AutonetError, Tensor};

/// Anything that owns trainable tensors in a fixed order.
pub trait Module {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Records every parameter as a leaf, in [`Module::params`] order.
    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Writes the gradient of each bound leaf into the matching parameter,
    /// replacing whatever was stored before.
    fn store_grads(&mut self, grads: &Gradients, bound: &[Var]) -> Result<(), AutonetError> {
        let params = self.params_mut();
        if params.len() != bound.len() {
            return Err(AutonetError::Shape(format!(
                "{} bound leaves for {} parameters",
                bound.len(),
                params.len()
            )));
        }
        for (p, &v) in params.into_iter().zip(bound) {
            p.set_grad(grads.get(v))?;
        }
        Ok(())
    }

    fn clear_grads(&mut self) {
        for p in self.params_mut() {
            p.clear_grad();
        }
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }
}

/// Polyak averaging `target <- tau * source + (1 - tau) * target`.
pub fn soft_update<M: Module>(target: &mut M, source: &M, tau: f64) {
    for (t, s) in target.params_mut().into_iter().zip(source.params()) {
        for (a, b) in t.values_mut().iter_mut().zip(s.values()) {
            *a = tau * b + (1.0 - tau) * *a;
        }
    }
}

fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let values = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, values)
}

/// Fully connected layer `act(x W + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    #[serde(skip, default = "identity")]
    pub activation: Activation,
}

fn identity() -> Activation {
    Activation::Identity
}

impl Dense {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Dense {
            weight: init_uniform(input, output, input, rng),
            bias: init_uniform(1, output, input, rng),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    /// `bound` holds the weight and bias leaves from [`Module::bind`].
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, AutonetError> {
        let xw = tape.matmul(x, bound[0])?;
        let z = tape.add_bias(xw, bound[1])?;
        tape.activate(z, self.activation.clone())
    }
}

impl Module for Dense {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Graph convolution `act(P H W)` with a shared weight and no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub weight: Tensor,
    #[serde(skip, default = "identity")]
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        GcnLayer {
            weight: init_uniform(input, output, input, rng),
            activation,
        }
    }

    /// `propagation` is the `N x N` operator and `h` the `N x F_in` features,
    /// or several such blocks stacked by rows.
    pub fn forward(&self, tape: &mut Tape, weight: Var, propagation: Var, h: Var) -> Result<Var, AutonetError> {
        let ph = tape.block_matmul(propagation, h)?;
        let z = tape.matmul(ph, weight)?;
        tape.activate(z, self.activation.clone())
    }
}

impl Module for GcnLayer {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight]
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`; hidden layers use `hidden`, the last
    /// layer uses `output`.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Self {
        let last = widths.len().saturating_sub(2);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output.clone() } else { hidden.clone() };
                Dense::new(w[0], w[1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, AutonetError> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, &bound[2 * i..2 * i + 2], h)?;
        }
        Ok(h)
    }
}

impl Module for Mlp {
    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
