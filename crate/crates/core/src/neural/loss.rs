use ndarray::{Array2, ArrayView2};

use super::{NetworkSpec, Parameters};
use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// What the network output is scored against.
#[derive(Debug, Clone, Copy)]
pub enum LossTarget<'a> {
    /// Mean squared error against a target matrix of the output's shape.
    Mse(ArrayView2<'a, f64>),
    /// Weighted cross-entropy against labels in `1..=K`.
    WeightedCe {
        labels: &'a [usize],
        weights: &'a [f64],
    },
}

impl LossTarget<'_> {
    /// Data loss of `output` against this target.
    pub fn evaluate(&self, output: &Array2<f64>) -> Result<f64> {
        match self {
            LossTarget::Mse(t) => loss_mse(output.view(), *t),
            LossTarget::WeightedCe { labels, weights } => {
                loss_weighted_ce(output.view(), labels, weights)
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// `(1/n) * sum_i w[y_i] * -ln(p[i][y_i])`, labels in `1..=K`.
pub fn loss_weighted_ce(probs: ArrayView2<f64>, labels: &[usize], class_weights: &[f64]) -> Result<f64> {
    let (n, k) = probs.dim();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    if class_weights.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} class weights for {k} classes",
            class_weights.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        if y < 1 || y > k {
            return Err(Error::LabelOutOfRange { label: y, k });
        }
        total += class_weights[y - 1] * -row[y - 1].max(PROB_FLOOR).ln();
    }
    Ok(total / n as f64)
}

/// Mean over all elements of the squared difference.
pub fn loss_mse(output: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if output.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "output {:?} vs target {:?}",
            output.dim(),
            target.dim()
        )));
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = output
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / output.len() as f64)
}

/// `l2_penalty * sum ||W||^2 / 2` over Dense weights (biases excluded).
pub fn l2_term(spec: &NetworkSpec, params: &Parameters) -> f64 {
    if spec.l2_penalty == 0.0 {
        return 0.0;
    }
    let sq: f64 = params
        .layers
        .iter()
        .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
        .sum();
    spec.l2_penalty * sq / 2.0
}
