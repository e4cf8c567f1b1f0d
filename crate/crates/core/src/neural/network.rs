use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::loss::{softmax_rows, LossTarget};
use super::{Activation, LayerSpec, NetworkSpec, Parameters};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Activations retained by a training-mode forward pass.
///
/// `activations[0]` is the input batch and `activations[i + 1]` the output of
/// layer `i`. Dropout layers also keep their keep-mask.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<bool>>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input")
    }

    pub fn n_rows(&self) -> usize {
        self.activations[0].nrows()
    }
}

fn check_input(spec: &NetworkSpec, params: &Parameters, batch: &ArrayView2<f64>) -> Result<()> {
    if !params.matches(spec) {
        return Err(Error::ShapeMismatch(
            "parameters do not match network spec".into(),
        ));
    }
    if batch.ncols() != spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch has {} columns, network expects {}",
            batch.ncols(),
            spec.input_dim()
        )));
    }
    Ok(())
}

fn dense_forward(
    input: &ArrayView2<f64>,
    params: &super::DenseParams,
    activation: Activation,
    layer: usize,
) -> Result<Array2<f64>> {
    let mut z = input.dot(&params.weights);
    z += &params.bias;
    match activation {
        Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
        Activation::Linear => {}
        Activation::Softmax => softmax_rows(&mut z),
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteActivation(layer));
    }
    Ok(z)
}

/// Run the network on `batch`.
///
/// In [`Mode::Train`] dropout layers zero each unit with probability `rate`
/// and scale survivors by `1 / (1 - rate)`, drawing masks from
/// `dropout_seed`. In [`Mode::Infer`] dropout is the identity.
pub fn forward(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: ArrayView2<f64>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(Array2<f64>, ForwardCache)> {
    check_input(spec, params, &batch)?;
    let mut rng = seed::rng(dropout_seed);
    let mut activations = vec![batch.to_owned()];
    let mut masks = Vec::with_capacity(spec.layers.len());
    let mut dense_idx = 0;
    for (i, layer) in spec.layers.iter().enumerate() {
        let input = activations.last().expect("non-empty");
        match *layer {
            LayerSpec::Dense { activation, .. } => {
                let out = dense_forward(&input.view(), &params.layers[dense_idx], activation, i)?;
                dense_idx += 1;
                activations.push(out);
                masks.push(None);
            }
            LayerSpec::Dropout { rate } => {
                if mode == Mode::Infer || rate == 0.0 {
                    let out = input.clone();
                    activations.push(out);
                    masks.push(None);
                } else {
                    let scale = 1.0 / (1.0 - rate);
                    let mask = Array2::from_shape_simple_fn(input.raw_dim(), || {
                        rng.gen::<f64>() >= rate
                    });
                    let mut out = input.clone();
                    Zip::from(&mut out).and(&mask).for_each(|x, &keep| {
                        *x = if keep { *x * scale } else { 0.0 };
                    });
                    activations.push(out);
                    masks.push(Some(mask));
                }
            }
        }
    }
    let output = activations.last().expect("non-empty").clone();
    Ok((output, ForwardCache { activations, masks }))
}

/// Inference-mode forward pass without retaining a cache. Rows are processed
/// in chunks to bound memory.
pub fn infer(spec: &NetworkSpec, params: &Parameters, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(spec, params, &batch)?;
    const CHUNK: usize = 4096;
    let n = batch.nrows();
    let mut out = Array2::zeros((n, spec.output_dim()));
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let mut x = batch.slice(ndarray::s![start..end, ..]).to_owned();
        let mut dense_idx = 0;
        for (i, layer) in spec.layers.iter().enumerate() {
            if let LayerSpec::Dense { activation, .. } = *layer {
                x = dense_forward(&x.view(), &params.layers[dense_idx], activation, i)?;
                dense_idx += 1;
            }
        }
        out.slice_mut(ndarray::s![start..end, ..]).assign(&x);
        start = end;
    }
    Ok(out)
}

/// Gradients of `data loss + l2_penalty * sum ||W||^2 / 2` with respect to
/// every weight and bias.
///
/// For a softmax output trained with weighted cross-entropy the fused
/// gradient `(p - onehot(y)) * w[y] / n` is used at the output layer.
pub fn backward(
    spec: &NetworkSpec,
    params: &Parameters,
    cache: &ForwardCache,
    target: &LossTarget<'_>,
) -> Result<Parameters> {
    if cache.activations.len() != spec.layers.len() + 1 || !params.matches(spec) {
        return Err(Error::CacheMismatch(format!(
            "cache has {} activations for {} layers",
            cache.activations.len(),
            spec.layers.len()
        )));
    }
    let output = cache.output();
    let n = output.nrows();
    let last = spec.layers.len() - 1;
    let last_is_dense = matches!(spec.layers[last], LayerSpec::Dense { .. });

    // `upstream` is dL/d(output of current layer), except when `preact` is
    // set, in which case it is already dL/d(pre-activation).
    let (mut upstream, mut preact) = match target {
        LossTarget::WeightedCe { labels, weights } => {
            if !(last_is_dense && spec.output_activation() == Activation::Softmax) {
                return Err(Error::InvalidNetwork(
                    "weighted cross-entropy requires a softmax output layer".into(),
                ));
            }
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            let k = output.ncols();
            if weights.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "{} class weights for {k} classes",
                    weights.len()
                )));
            }
            let mut dz = output.clone();
            for (mut row, &y) in dz.rows_mut().into_iter().zip(labels.iter()) {
                if y < 1 || y > k {
                    return Err(Error::LabelOutOfRange { label: y, k });
                }
                row[y - 1] -= 1.0;
                row *= weights[y - 1] / n as f64;
            }
            (dz, true)
        }
        LossTarget::Mse(t) => {
            if t.dim() != output.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "output {:?} vs target {:?}",
                    output.dim(),
                    t.dim()
                )));
            }
            let scale = 2.0 / (output.len().max(1)) as f64;
            let mut g = output - t;
            g *= scale;
            (g, false)
        }
    };

    let mut grads = Parameters::zeros_like(spec);
    let mut dense_idx = params.layers.len();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        match *layer {
            LayerSpec::Dropout { rate } => {
                if let Some(mask) = &cache.masks[i] {
                    let scale = 1.0 / (1.0 - rate);
                    Zip::from(&mut upstream).and(mask).for_each(|g, &keep| {
                        *g = if keep { *g * scale } else { 0.0 };
                    });
                }
            }
            LayerSpec::Dense { activation, .. } => {
                dense_idx -= 1;
                let out = &cache.activations[i + 1];
                let dz = if preact {
                    preact = false;
                    upstream
                } else {
                    match activation {
                        Activation::Linear => upstream,
                        Activation::Relu => {
                            let mut g = upstream;
                            Zip::from(&mut g).and(out).for_each(|g, &a| {
                                if a <= 0.0 {
                                    *g = 0.0;
                                }
                            });
                            g
                        }
                        Activation::Softmax => {
                            // Jacobian-vector product: p * (g - <g, p>)
                            let mut g = upstream;
                            for (mut grow, prow) in g.rows_mut().into_iter().zip(out.rows()) {
                                let dot = grow.dot(&prow);
                                Zip::from(&mut grow)
                                    .and(&prow)
                                    .for_each(|g, &p| *g = p * (*g - dot));
                            }
                            g
                        }
                    }
                };
                let input = &cache.activations[i];
                let w = &params.layers[dense_idx].weights;
                let gl = &mut grads.layers[dense_idx];
                gl.weights = input.t().dot(&dz);
                if spec.l2_penalty > 0.0 {
                    gl.weights.scaled_add(spec.l2_penalty, w);
                }
                gl.bias = dz.sum_axis(Axis(0));
                upstream = if i > 0 {
                    dz.dot(&w.t())
                } else {
                    Array2::zeros((0, 0))
                };
            }
        }
    }
    Ok(grads)
}
