//! The two trained models: a mirrored autoencoder whose encoder half reduces
//! feature width, and a class-weighted severity classifier with best
//! validation-BER checkpointing.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::class_counts;
use crate::error::{Error, Result};
use crate::evaluation::{confusion, MetricsReport};
use crate::neural::{
    adam_step, backward, forward, infer, init_params, l2_term, Activation, AdamState, LayerSpec,
    LossTarget, Mode, NetworkSpec, Parameters,
};
use crate::preprocess::FeatureMatrix;
use crate::seed;

/// Per-class loss multipliers `w[c] = N / (K * n_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(k: usize) -> Self {
        Self {
            weights: vec![1.0; k],
        }
    }
}

/// Balanced weights from training labels in `1..=k`.
pub fn compute_class_weights(train_labels: &[usize], k: usize) -> Result<ClassWeights> {
    let counts = class_counts(train_labels, k);
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing + 1));
    }
    if let Some(&bad) = train_labels.iter().find(|&&l| l < 1 || l > k) {
        return Err(Error::LabelOutOfRange { label: bad, k });
    }
    let n = train_labels.len() as f64;
    Ok(ClassWeights {
        weights: counts.iter().map(|&c| n / (k as f64 * c as f64)).collect(),
    })
}

fn check_width(expected: usize, data: &ArrayView2<f64>) -> Result<()> {
    if data.ncols() != expected {
        return Err(Error::WidthMismatch {
            expected,
            found: data.ncols(),
        });
    }
    Ok(())
}

fn check_finite(loss: f64, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss(epoch))
    }
}

/// Shuffled mini-batch index lists for one epoch.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

// ---------------------------------------------------------------------------
// Autoencoder

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub input_dim: usize,
    #[serde(default = "default_encoder_widths")]
    pub encoder_widths: Vec<usize>,
    #[serde(default = "default_ae_epochs")]
    pub epochs: usize,
    #[serde(default = "default_ae_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Activation of every encoder layer and every decoder layer except the
    /// linear output.
    #[serde(default = "default_hidden_activation")]
    pub hidden_activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

fn default_encoder_widths() -> Vec<usize> {
    vec![512, 256]
}
fn default_ae_epochs() -> usize {
    200
}
fn default_ae_batch() -> usize {
    1000
}
fn default_lr() -> f64 {
    0.001
}
fn default_hidden_activation() -> Activation {
    Activation::Relu
}

impl AutoencoderConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            encoder_widths: default_encoder_widths(),
            epochs: default_ae_epochs(),
            batch_size: default_ae_batch(),
            learning_rate: default_lr(),
            hidden_activation: default_hidden_activation(),
            seed: 0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.encoder_widths.is_empty() {
            return Err(Error::InvalidConfig(
                "autoencoder needs an input width and at least one encoder layer".into(),
            ));
        }
        if self.encoder_widths.contains(&0) || self.batch_size == 0 {
            return Err(Error::InvalidConfig("widths and batch size must be positive".into()));
        }
        if self.latent_dim() > self.input_dim {
            return Err(Error::InvalidConfig(format!(
                "latent width {} exceeds input width {}",
                self.latent_dim(),
                self.input_dim
            )));
        }
        if self.hidden_activation == Activation::Softmax || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "hidden activation must be relu or linear and learning rate positive".into(),
            ));
        }
        Ok(())
    }
}

/// `d -> w1 -> ... -> latent` mirrored back to `d`, linear output.
pub fn build_autoencoder(cfg: &AutoencoderConfig) -> Result<NetworkSpec> {
    cfg.validate()?;
    let act = cfg.hidden_activation;
    let mut widths = vec![cfg.input_dim];
    widths.extend(&cfg.encoder_widths);
    let mut layers = Vec::new();
    for w in widths.windows(2) {
        layers.push(LayerSpec::dense(w[0], w[1], act));
    }
    let rev: Vec<usize> = widths.iter().rev().copied().collect();
    for (i, w) in rev.windows(2).enumerate() {
        let last = i == rev.len() - 2;
        layers.push(LayerSpec::dense(
            w[0],
            w[1],
            if last { Activation::Linear } else { act },
        ));
    }
    NetworkSpec::new(layers, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderHistory {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    /// Full-pass reconstruction MSE after each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Trained autoencoder: config, network spec and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub config: AutoencoderConfig,
    pub spec: NetworkSpec,
    pub params: Parameters,
}

impl Autoencoder {
    pub fn from_parts(config: AutoencoderConfig, params: Parameters) -> Result<Self> {
        let spec = build_autoencoder(&config)?;
        if !params.matches(&spec) {
            return Err(Error::ShapeMismatch(
                "parameters do not match the autoencoder config".into(),
            ));
        }
        Ok(Self {
            config,
            spec,
            params,
        })
    }

    /// Encoder half as a standalone network.
    pub fn encoder(&self) -> (NetworkSpec, Parameters) {
        let n_enc = self.config.encoder_widths.len();
        let spec = NetworkSpec {
            layers: self.spec.layers[..n_enc].to_vec(),
            l2_penalty: 0.0,
        };
        let params = Parameters {
            layers: self.params.layers[..n_enc].to_vec(),
        };
        (spec, params)
    }

    pub fn reconstruct(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_width(self.config.input_dim, &data)?;
        infer(&self.spec, &self.params, data)
    }
}

/// Train on `train` to reconstruct its own rows, recording full-pass train
/// and validation MSE after every epoch.
pub fn train_autoencoder(
    cfg: &AutoencoderConfig,
    train: &FeatureMatrix,
    val: &FeatureMatrix,
) -> Result<(Autoencoder, AutoencoderHistory)> {
    let spec = build_autoencoder(cfg)?;
    check_width(cfg.input_dim, &train.view())?;
    check_width(cfg.input_dim, &val.view())?;
    if train.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut params = init_params(&spec, seed::derive_seed(cfg.seed, "ae-init"));
    let mut adam = AdamState::new(&spec, cfg.learning_rate);
    let mut shuffle_rng = seed::rng(seed::derive_seed(cfg.seed, "ae-shuffle"));

    let eval = |params: &Parameters, data: &FeatureMatrix| -> Result<f64> {
        if data.n_rows() == 0 {
            return Ok(0.0);
        }
        let out = infer(&spec, params, data.view())?;
        crate::neural::loss_mse(out.view(), data.view())
    };
    let mut history = AutoencoderHistory {
        initial_train_loss: eval(&params, train)?,
        initial_val_loss: eval(&params, val)?,
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        for batch in epoch_batches(train.n_rows(), cfg.batch_size, &mut shuffle_rng) {
            let x = train.values.select(Axis(0), &batch);
            let (_, cache) = forward(&spec, &params, x.view(), Mode::Train, 0)?;
            let grads = backward(&spec, &params, &cache, &LossTarget::Mse(x.view()))?;
            adam_step(&mut params, &grads, &mut adam)?;
        }
        history
            .train_loss
            .push(check_finite(eval(&params, train)?, epoch)?);
        history.val_loss.push(check_finite(eval(&params, val)?, epoch)?);
    }
    let ae = Autoencoder {
        config: cfg.clone(),
        spec,
        params,
    };
    Ok((ae, history))
}

/// Latent representation of `data` (inference mode, encoder layers only).
pub fn encode(ae: &Autoencoder, data: &FeatureMatrix) -> Result<FeatureMatrix> {
    check_width(ae.config.input_dim, &data.view())?;
    let latent = ae.config.latent_dim();
    if data.n_rows() == 0 {
        return Ok(FeatureMatrix::from_array(Array2::zeros((0, latent))));
    }
    let (spec, params) = ae.encoder();
    let values = infer(&spec, &params, data.view())?;
    let labels = (0..latent).map(|j| format!("z{j}")).collect();
    FeatureMatrix::new(values, labels)
}

// ---------------------------------------------------------------------------
// Classifier

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub initial_neurons: usize,
    pub initial_dropout: f64,
    pub batch_size: usize,
    pub l2_penalty: f64,
    #[serde(default = "default_clf_epochs")]
    pub epochs: usize,
    #[serde(default = "default_true")]
    pub use_class_weights: bool,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_clf_epochs() -> usize {
    50
}
fn default_true() -> bool {
    true
}

impl Default for ClassifierConfig {
    /// The best cell reported for the un-encoded model.
    fn default() -> Self {
        Self {
            initial_neurons: 1218,
            initial_dropout: 0.3,
            batch_size: 5000,
            l2_penalty: 0.0001,
            epochs: default_clf_epochs(),
            use_class_weights: true,
            learning_rate: default_lr(),
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_neurons < 4 {
            return Err(Error::InvalidConfig(
                "initial_neurons must be at least 4".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.initial_dropout) {
            return Err(Error::InvalidConfig("initial_dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch size and epochs must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "l2 penalty must be >= 0 and learning rate > 0".into(),
            ));
        }
        Ok(())
    }

    /// Dropout applied after the second hidden layer.
    pub fn second_dropout(&self) -> f64 {
        let r = (self.initial_dropout - 0.1).max(0.1);
        (r * 1e12).round() / 1e12
    }
}

/// `in -> N (relu) -> dropout p -> N/2 (relu) -> dropout max(p - 0.1, 0.1)
/// -> N/4 (relu) -> K (softmax)` with integer-divided widths.
pub fn build_classifier(cfg: &ClassifierConfig, input_dim: usize, k: usize) -> Result<NetworkSpec> {
    cfg.validate()?;
    if input_dim == 0 || k < 2 {
        return Err(Error::InvalidConfig(
            "classifier needs a positive input width and at least two classes".into(),
        ));
    }
    let n = cfg.initial_neurons;
    NetworkSpec::new(
        vec![
            LayerSpec::dense(input_dim, n, Activation::Relu),
            LayerSpec::dropout(cfg.initial_dropout),
            LayerSpec::dense(n, n / 2, Activation::Relu),
            LayerSpec::dropout(cfg.second_dropout()),
            LayerSpec::dense(n / 2, n / 4, Activation::Relu),
            LayerSpec::dense(n / 4, k, Activation::Softmax),
        ],
        cfg.l2_penalty,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss including the L2 term.
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest validation BER, earliest on ties).
    pub best_epoch: usize,
    pub class_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub spec: NetworkSpec,
    pub params: Parameters,
}

impl Classifier {
    pub fn n_classes(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        predict(&self.spec, &self.params, features)
    }
}

/// Mini-batch training with weighted cross-entropy. `weights = None` trains
/// with unit weights. The returned parameters come from the epoch with the
/// lowest validation BER.
pub fn train_classifier(
    cfg: &ClassifierConfig,
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    val_x: ArrayView2<f64>,
    val_y: &[usize],
    k: usize,
    weights: Option<&ClassWeights>,
) -> Result<(Classifier, ClassifierHistory)> {
    let spec = build_classifier(cfg, train_x.ncols(), k)?;
    check_width(train_x.ncols(), &val_x)?;
    if train_y.len() != train_x.nrows() {
        return Err(Error::LengthMismatch(train_y.len(), train_x.nrows()));
    }
    if val_y.len() != val_x.nrows() {
        return Err(Error::LengthMismatch(val_y.len(), val_x.nrows()));
    }
    if train_y.is_empty() || val_y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = train_y.iter().chain(val_y).find(|&&l| l < 1 || l > k) {
        return Err(Error::LabelOutOfRange { label: bad, k });
    }
    let class_weights = match weights {
        Some(w) if w.weights.len() != k => {
            return Err(Error::ShapeMismatch(format!(
                "{} class weights for {k} classes",
                w.weights.len()
            )))
        }
        Some(w) => w.clone(),
        None => ClassWeights::uniform(k),
    };

    let mut params = init_params(&spec, seed::derive_seed(cfg.seed, "clf-init"));
    let mut adam = AdamState::new(&spec, cfg.learning_rate);
    let mut shuffle_rng = seed::rng(seed::derive_seed(cfg.seed, "clf-shuffle"));
    let mut dropout_rng = seed::rng(seed::derive_seed(cfg.seed, "clf-dropout"));

    let mut best: Option<(f64, usize, Parameters)> = None;
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for batch in epoch_batches(train_y.len(), cfg.batch_size, &mut shuffle_rng) {
            let x = train_x.select(Axis(0), &batch);
            let y: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            let target = LossTarget::WeightedCe {
                labels: &y,
                weights: &class_weights.weights,
            };
            let (out, cache) = forward(&spec, &params, x.view(), Mode::Train, dropout_rng.next_u64())?;
            loss_sum += target.evaluate(&out)? + l2_term(&spec, &params);
            n_batches += 1;
            let grads = backward(&spec, &params, &cache, &target)?;
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let train_loss = check_finite(loss_sum / n_batches as f64, epoch)?;
        let preds = predict(&spec, &params, val_x)?;
        let report = MetricsReport::from_confusion(confusion(&preds, val_y, k)?)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy: report.accuracy,
            val_ber: report.ber,
        });
        if best.as_ref().is_none_or(|(b, _, _)| report.ber < *b) {
            best = Some((report.ber, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok((
        Classifier {
            config: cfg.clone(),
            spec,
            params: best_params,
        },
        ClassifierHistory {
            epochs: records,
            best_epoch,
            class_weights: class_weights.weights,
        },
    ))
}

/// Index of the row maximum as a 1-based label; ties go to the lower class.
pub fn argmax_labels(probs: ArrayView2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = j;
                }
            }
            best + 1
        })
        .collect()
}

pub fn predict(spec: &NetworkSpec, params: &Parameters, features: ArrayView2<f64>) -> Result<Vec<usize>> {
    check_width(spec.input_dim(), &features)?;
    if features.nrows() == 0 {
        return Ok(Vec::new());
    }
    let probs = infer(spec, params, features)?;
    Ok(argmax_labels(probs.view()))
}
