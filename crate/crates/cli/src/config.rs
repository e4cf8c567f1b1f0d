//! Pipeline configuration: a JSON file, then `--set key=value` overrides,
//! then explicit flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use severity_core::association::DEFAULT_BINS;
use severity_core::evaluation::GridSpec;
use severity_core::models::{AutoencoderConfig, ClassifierConfig};
use severity_core::neural::Activation;
use severity_core::preprocess::DEFAULT_RATIOS;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub work_dir: PathBuf,
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub association: AssociationSettings,
    pub split: SplitSettings,
    pub autoencoder: AutoencoderSettings,
    /// Classifier on the one-hot/standardized features.
    pub classifier: ClassifierSettings,
    /// Classifier on the autoencoder's latent codes.
    pub encoded_classifier: ClassifierSettings,
    pub grid: GridSpec,
    pub cv: CvSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: None,
            schema: None,
            work_dir: PathBuf::from("work"),
            seed: 0,
            association: AssociationSettings::default(),
            split: SplitSettings::default(),
            autoencoder: AutoencoderSettings::default(),
            classifier: ClassifierSettings::default(),
            encoded_classifier: ClassifierSettings {
                initial_dropout: 0.2,
                ..ClassifierSettings::default()
            },
            grid: GridSpec::paper(),
            cv: CvSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationSettings {
    pub n_bins: usize,
    pub threshold: f64,
    pub bias_corrected: bool,
}

impl Default for AssociationSettings {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            threshold: 0.2,
            bias_corrected: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub ratios: [f64; 3],
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            ratios: DEFAULT_RATIOS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSettings {
    pub encoder_widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_activation: Activation,
}

impl Default for AutoencoderSettings {
    fn default() -> Self {
        let d = AutoencoderConfig::new(1);
        Self {
            encoder_widths: d.encoder_widths,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            hidden_activation: d.hidden_activation,
        }
    }
}

impl AutoencoderSettings {
    pub fn to_config(&self, input_dim: usize, seed: u64) -> AutoencoderConfig {
        AutoencoderConfig {
            input_dim,
            encoder_widths: self.encoder_widths.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            hidden_activation: self.hidden_activation,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSettings {
    pub initial_neurons: usize,
    pub initial_dropout: f64,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub epochs: usize,
    pub use_class_weights: bool,
    pub learning_rate: f64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        let d = ClassifierConfig::default();
        Self {
            initial_neurons: d.initial_neurons,
            initial_dropout: d.initial_dropout,
            batch_size: d.batch_size,
            l2_penalty: d.l2_penalty,
            epochs: d.epochs,
            use_class_weights: d.use_class_weights,
            learning_rate: d.learning_rate,
        }
    }
}

impl ClassifierSettings {
    pub fn to_config(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            initial_neurons: self.initial_neurons,
            initial_dropout: self.initial_dropout,
            batch_size: self.batch_size,
            l2_penalty: self.l2_penalty,
            epochs: self.epochs,
            use_class_weights: self.use_class_weights,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub k: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { k: 10 }
    }
}

/// Flag values that take precedence over the file and `--set`.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub work_dir: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub no_class_weights: bool,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for s in &overrides.sets {
            apply_set(&mut value, s)?;
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("config: {e}")))?;
        // relative paths in a config file are relative to the file
        if let Some(base) = path.and_then(Path::parent) {
            for p in [&mut cfg.data, &mut cfg.schema].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(w) = &overrides.work_dir {
            cfg.work_dir = w.clone();
        }
        if let Some(d) = &overrides.data {
            cfg.data = Some(d.clone());
        }
        if let Some(s) = &overrides.schema {
            cfg.schema = Some(s.clone());
        }
        if overrides.no_class_weights {
            cfg.classifier.use_class_weights = false;
            cfg.encoded_classifier.use_class_weights = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let a = &self.association;
        if !(0.0..=1.0).contains(&a.threshold) {
            return Err(CliError::Config(format!(
                "association.threshold {} outside [0, 1]",
                a.threshold
            )));
        }
        if a.n_bins < 2 {
            return Err(CliError::Config("association.n_bins must be at least 2".into()));
        }
        let r = self.split.ratios;
        if r.iter().any(|&x| !(x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!(
                "split.ratios {r:?} must be positive and sum to 1"
            )));
        }
        if self.cv.k < 2 {
            return Err(CliError::Config("cv.k must be at least 2".into()));
        }
        for (name, c) in [("classifier", &self.classifier), ("encoded_classifier", &self.encoded_classifier)] {
            c.to_config(0)
                .validate()
                .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        }
        let widths = &self.autoencoder.encoder_widths;
        self.autoencoder
            .to_config(widths.last().copied().unwrap_or(1).max(1), 0)
            .validate()
            .map_err(|e| CliError::Config(format!("autoencoder: {e}")))?;
        let g = &self.grid;
        if g.size() == 0 {
            return Err(CliError::Config("grid lists must be non-empty".into()));
        }
        Ok(())
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        existing(self.data.as_deref(), "data")
    }

    pub fn schema_path(&self) -> CliResult<&Path> {
        existing(self.schema.as_deref(), "schema")
    }
}

fn existing<'a>(p: Option<&'a Path>, what: &str) -> CliResult<&'a Path> {
    let p = p.ok_or_else(|| {
        CliError::Config(format!("no {what} path: set it in the config, with --{what}, or --set {what}=PATH"))
    })?;
    if !p.exists() {
        return Err(CliError::Config(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p)
}

/// Apply `a.b.c=value` to a JSON object, creating intermediate objects.
/// The value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_set(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad key {key:?} in --set")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("--set {key}: {part} is not an object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Config(format!("--set {key}: parent is not an object")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
