//! Encoder, projector and linear classifier, plus checkpoint files.
//!
//! Every forward pass is expressed on a [`Tape`]; the tape-free entry points
//! record onto a scratch tape of constants, so training and evaluation share
//! one arithmetic path and agree bit-for-bit.

mod checkpoint;
mod classifier;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub use checkpoint::{Checkpoint, Component, ComponentKind, Provenance, CHECKPOINT_VERSION};
pub use classifier::{collapse_two_logit, softmax_positive, ClassifierVars, LinearClassifier};

/// Uniform Glorot initialization, `±sqrt(6/(fan_in+fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("shape is non-empty")
}

/// One affine layer `x W + b` with `W: in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot_uniform(input, output, vec![input, output], rng),
            bias: Tensor::zeros(vec![output]),
        }
    }

    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.cols()] {
            return Err(Error::dim(
                "dense",
                format!("weight {:?} with bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Self { weight, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Multilayer perceptron: relu after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Tape handles of an [`Mlp`]'s weights and biases.
#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
}

impl MlpVars {
    /// Handles in [`Mlp::params`] order.
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

impl Mlp {
    /// Layer widths `sizes[0] → sizes[1] → …`.
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dim(
                    "mlp",
                    format!(
                        "layer {i} outputs {} but layer {} takes {}",
                        pair[0].output_dim(),
                        i + 1,
                        pair[1].input_dim()
                    ),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Widths from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    /// Weights and biases, layer by layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}.layer{i}.weight"), format!("{prefix}.layer{i}.bias")])
            .collect()
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        MlpVars { layers }
    }

    pub fn forward_tape(&self, tape: &mut Tape, vars: &MlpVars, x: Var, op: &'static str) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::dim(
                op,
                format!("input {shape:?} for a network taking width {}", self.input_dim()),
            ));
        }
        let last = vars.layers.len() - 1;
        let mut y = x;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            y = tape.matmul(y, w)?;
            y = tape.add_row_bias(y, b)?;
            if i < last {
                y = tape.relu(y)?;
            }
        }
        Ok(y)
    }
}

/// Feature extractor mapping input rows to representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub net: Mlp,
}

impl Encoder {
    /// `input → hidden… → repr_dim`.
    pub fn init(input: usize, hidden: &[usize], repr_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(repr_dim);
        Ok(Self { net: Mlp::init(&sizes, rng)? })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn repr_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn forward_tape(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var> {
        self.net.forward_tape(tape, vars, x, "encoder_forward")
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.net.register(&mut tape, false);
        let x = tape.constant(x.clone());
        let h = self.forward_tape(&mut tape, &vars, x)?;
        Ok(tape.value(h).clone())
    }
}

/// Projection head; output rows are unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub net: Mlp,
}

impl Projector {
    /// `repr_dim → repr_dim → proj_dim` with relu on the hidden layer.
    pub fn init(repr_dim: usize, proj_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::from_net(Mlp::init(&[repr_dim, repr_dim, proj_dim], rng)?)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.output_dim() < 2 {
            return Err(Error::Config(format!("projection width must be >= 2, got {}", net.output_dim())));
        }
        Ok(Self { net })
    }

    pub fn proj_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn forward_tape(&self, tape: &mut Tape, vars: &MlpVars, h: Var) -> Result<Var> {
        let y = self.net.forward_tape(tape, vars, h, "projector_forward")?;
        tape.l2_normalize_rows(y)
    }

    pub fn forward(&self, h: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.net.register(&mut tape, false);
        let h = tape.constant(h.clone());
        let z = self.forward_tape(&mut tape, &vars, h)?;
        Ok(tape.value(z).clone())
    }
}

/// Widths of the encoder and projection head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub repr_dim: usize,
    pub proj_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            repr_dim: 128,
            proj_dim: 32,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.repr_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.proj_dim < 2 {
            return Err(Error::Config(format!("projection width must be >= 2, got {}", self.proj_dim)));
        }
        Ok(())
    }

    pub fn encoder_sizes(&self, input: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend_from_slice(&self.hidden);
        s.push(self.repr_dim);
        s
    }
}
