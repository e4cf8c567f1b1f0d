use ndarray::{Array2, ArrayView2};
use rand::seq::index;

use super::loss::{LossTarget, PROB_FLOOR};
use super::network::{backward, forward, Mode};
use super::{NetworkSpec, Parameters};
use crate::error::Result;
use crate::seed;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
}

fn train_output(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: ArrayView2<f64>,
    dropout_seed: u64,
) -> Result<Array2<f64>> {
    Ok(forward(spec, params, batch, Mode::Train, dropout_seed)?.0)
}

/// `loss(plus) - loss(minus)` for the data term, accumulated per element so
/// that large but unchanged loss contributions do not swamp the difference.
fn data_loss_difference(plus: &Array2<f64>, minus: &Array2<f64>, target: &LossTarget<'_>) -> Result<f64> {
    // validates shapes and labels
    target.evaluate(plus)?;
    let n = plus.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    match target {
        LossTarget::Mse(t) => {
            let sum: f64 = plus
                .iter()
                .zip(minus.iter())
                .zip(t.iter())
                .map(|((a, b), t)| (a - b) * (a + b - 2.0 * t))
                .sum();
            Ok(sum / plus.len() as f64)
        }
        LossTarget::WeightedCe { labels, weights } => {
            let mut total = 0.0;
            for (i, &y) in labels.iter().enumerate() {
                let a = plus[[i, y - 1]].max(PROB_FLOOR);
                let b = minus[[i, y - 1]].max(PROB_FLOOR);
                total -= weights[y - 1] * ((a - b) / b).ln_1p();
            }
            Ok(total / n as f64)
        }
    }
}

fn is_weight(params: &Parameters, mut index: usize) -> bool {
    for l in &params.layers {
        if index < l.weights.len() {
            return true;
        }
        index -= l.weights.len();
        if index < l.bias.len() {
            return false;
        }
        index -= l.bias.len();
    }
    false
}

/// Compare backpropagated gradients against central differences on up to
/// `max_coords` sampled parameters.
///
/// The forward pass runs in train mode with a fixed dropout seed so every
/// perturbed evaluation sees the same masks; with rate-0 dropout this is the
/// plain network.
pub fn gradient_check(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: ArrayView2<f64>,
    target: &LossTarget<'_>,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let dropout_seed = seed::derive_seed(seed, "gradcheck-dropout");
    let (_, cache) = forward(spec, params, batch, Mode::Train, dropout_seed)?;
    let analytic = backward(spec, params, &cache, target)?;
    compare_gradients(spec, params, batch, target, &analytic, max_coords, seed)
}

/// Central-difference comparison against a supplied gradient.
///
/// Numeric derivatives are central differences of the total loss (data term
/// plus L2), with the difference accumulated per element. Relative error per
/// coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`; the report carries the maximum.
pub fn compare_gradients(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: ArrayView2<f64>,
    target: &LossTarget<'_>,
    analytic: &Parameters,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let dropout_seed = seed::derive_seed(seed, "gradcheck-dropout");
    let total = params.len();
    let mut rng = seed::rng(seed);
    let coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        let mut v = index::sample(&mut rng, total, max_coords).into_vec();
        v.sort_unstable();
        v
    };
    let analytic_flat = analytic.flat();
    let weight_coord: Vec<bool> = (0..total).map(|i| is_weight(params, i)).collect();
    let mut probe = params.clone();
    let mut worst = (0.0f64, 0usize);
    for &i in &coords {
        let original = *probe.get_mut(i);
        *probe.get_mut(i) = original + STEP;
        let hi = original + STEP;
        let plus = train_output(spec, &probe, batch, dropout_seed)?;
        *probe.get_mut(i) = original - STEP;
        let lo = original - STEP;
        let minus = train_output(spec, &probe, batch, dropout_seed)?;
        *probe.get_mut(i) = original;
        let mut diff = data_loss_difference(&plus, &minus, target)?;
        if weight_coord[i] {
            // every other weight cancels in the penalty difference
            diff += spec.l2_penalty * (hi * hi - lo * lo) / 2.0;
        }
        let numeric = diff / (hi - lo);
        let a = analytic_flat[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        coordinates_checked: coords.len(),
        worst_index: worst.1,
    })
}
