//! Dense feed-forward networks in `f64`: forward and backward passes with
//! inverted dropout and L2 weight decay, the two training losses, an Adam
//! optimizer, and a finite-difference gradient checker.

mod gradcheck;
mod loss;
mod model_file;
mod network;
mod optim;

pub use gradcheck::{compare_gradients, gradient_check, GradCheckReport};
pub use loss::{l2_term, loss_mse, loss_weighted_ce, softmax_rows, LossTarget};
pub use model_file::{load_model, save_model, ModelFile, MODEL_FORMAT_VERSION};
pub use network::{backward, forward, infer, ForwardCache, Mode};
pub use optim::{adam_step, AdamState};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec::Dense {
            fan_in,
            fan_out,
            activation,
        }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }
}

/// Ordered layer stack plus the L2 penalty applied to Dense weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub l2_penalty: f64,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, l2_penalty: f64) -> Result<Self> {
        let spec = Self { layers, l2_penalty };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::InvalidNetwork("l2 penalty must be >= 0".into()));
        }
        let dense: Vec<(usize, usize, usize, Activation)> = self
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match *l {
                LayerSpec::Dense {
                    fan_in,
                    fan_out,
                    activation,
                } => Some((i, fan_in, fan_out, activation)),
                LayerSpec::Dropout { .. } => None,
            })
            .collect();
        if dense.is_empty() {
            return Err(Error::InvalidNetwork("no Dense layer".into()));
        }
        for l in &self.layers {
            if let LayerSpec::Dropout { rate } = *l {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidNetwork(format!(
                        "dropout rate {rate} outside [0, 1)"
                    )));
                }
            }
        }
        for w in dense.windows(2) {
            if w[0].2 != w[1].1 {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    w[0].0, w[0].2, w[1].0, w[1].1
                )));
            }
        }
        for &(i, fan_in, fan_out, act) in &dense {
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::InvalidNetwork(format!("layer {i} has zero width")));
            }
            if act == Activation::Softmax && i != self.layers.len() - 1 {
                return Err(Error::InvalidNetwork(
                    "softmax is only allowed on the final layer".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.dense_shapes()[0].0
    }

    pub fn output_dim(&self) -> usize {
        *self
            .dense_shapes()
            .last()
            .map(|(_, o)| o)
            .expect("validated spec has a Dense layer")
    }

    /// `(fan_in, fan_out)` of each Dense layer, in order.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Dense {
                    fan_in, fan_out, ..
                } => Some((fan_in, fan_out)),
                LayerSpec::Dropout { .. } => None,
            })
            .collect()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match *l {
                LayerSpec::Dense { activation, .. } => Some(activation),
                LayerSpec::Dropout { .. } => None,
            })
            .expect("validated spec has a Dense layer")
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Dropout { rate } => Some(rate),
                LayerSpec::Dense { .. } => None,
            })
            .collect()
    }

    /// Copy of the spec with every dropout rate set to zero.
    pub fn without_dropout(&self) -> NetworkSpec {
        NetworkSpec {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    LayerSpec::Dropout { .. } => LayerSpec::Dropout { rate: 0.0 },
                    other => other.clone(),
                })
                .collect(),
            l2_penalty: self.l2_penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Trainable weights of every Dense layer. Gradients share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<DenseParams>,
}

impl Parameters {
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .dense_shapes()
                .into_iter()
                .map(|(i, o)| DenseParams {
                    weights: Array2::zeros((i, o)),
                    bias: Array1::zeros(o),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values in file order: per layer, weights row-major then bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn from_flat(spec: &NetworkSpec, values: &[f64]) -> Result<Self> {
        let mut p = Self::zeros_like(spec);
        if p.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter values for a network with {}",
                values.len(),
                p.len()
            )));
        }
        let mut it = values.iter();
        for l in &mut p.layers {
            for w in l.weights.iter_mut() {
                *w = *it.next().expect("length checked");
            }
            for b in l.bias.iter_mut() {
                *b = *it.next().expect("length checked");
            }
        }
        Ok(p)
    }

    /// Mutable reference to the `index`-th value in [`Parameters::flat`] order.
    pub fn get_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if index < nw {
                let cols = l.weights.ncols();
                return &mut l.weights[[index / cols, index % cols]];
            }
            index -= nw;
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        let shapes = spec.dense_shapes();
        shapes.len() == self.layers.len()
            && shapes
                .iter()
                .zip(&self.layers)
                .all(|(&(i, o), l)| l.weights.dim() == (i, o) && l.bias.len() == o)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }
}

/// He-uniform weights for Dense layers with relu activation, Glorot-uniform
/// otherwise; zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Parameters {
    let mut rng = seed::rng(seed);
    let mut params = Parameters::zeros_like(spec);
    let activations = spec.layers.iter().filter_map(|l| match *l {
        LayerSpec::Dense { activation, .. } => Some(activation),
        LayerSpec::Dropout { .. } => None,
    });
    for (layer, act) in params.layers.iter_mut().zip(activations) {
        let (fan_in, fan_out) = layer.weights.dim();
        let limit = match act {
            Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        layer
            .weights
            .mapv_inplace(|_| rng.gen_range(-limit..=limit));
    }
    params
}
