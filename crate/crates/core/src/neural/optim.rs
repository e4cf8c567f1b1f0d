use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{NetworkSpec, Parameters};
use crate::error::{Error, Result};

/// Adam moment estimates and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Parameters,
    pub second_moment: Parameters,
}

impl AdamState {
    pub fn new(spec: &NetworkSpec, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Parameters::zeros_like(spec),
            second_moment: Parameters::zeros_like(spec),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut Parameters, grads: &Parameters, state: &mut AdamState) -> Result<()> {
    let same_shape = params.layers.len() == grads.layers.len()
        && params.layers.len() == state.first_moment.layers.len()
        && params
            .layers
            .iter()
            .zip(&grads.layers)
            .zip(&state.first_moment.layers)
            .all(|((p, g), m)| {
                p.weights.dim() == g.weights.dim()
                    && p.weights.dim() == m.weights.dim()
                    && p.bias.len() == g.bias.len()
                    && p.bias.len() == m.bias.len()
            });
    if !same_shape {
        return Err(Error::ShapeMismatch(
            "parameters, gradients and optimizer state differ in shape".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.learning_rate);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first_moment.layers)
        .zip(&mut state.second_moment.layers)
    {
        Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(update);
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    Ok(())
}
