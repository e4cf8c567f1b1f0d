//! Pipeline stages. Each stage reads its inputs from the work directory,
//! writes its artifacts there and returns a JSON report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::{concatenate, Axis};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use severity_core::artifact::{read_json, write_json};
use severity_core::association::{association_matrix, select_features, SelectionReport};
use severity_core::dataset::{
    generate_synthetic, impute, ingest_csv, ingest_for_scoring, summarize, write_csv, SchemaSpec,
    SyntheticSpec,
};
use severity_core::evaluation::{
    classifier_runner, confusion, cross_validate, grid_search, CvResult, MetricsReport,
};
use severity_core::models::{
    compute_class_weights, encode, train_autoencoder, train_classifier, Autoencoder,
    AutoencoderConfig, ClassifierConfig,
};
use severity_core::neural::{load_model, save_model, ModelFile};
use severity_core::preprocess::{stratified_split, FeatureMatrix, FeaturePipeline};
use severity_core::seed::derive_seed;
use severity_core::Error;

use crate::config::{ClassifierSettings, PipelineConfig};
use crate::error::{CliError, CliResult};

/// Which design matrix a classifier stage consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// One-hot/standardized features from `preprocess`.
    Features,
    /// Autoencoder codes from `encode`.
    Latent,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Features => "features",
            Representation::Latent => "latent",
        }
    }

    fn default_model_name(self) -> &'static str {
        match self {
            Representation::Features => "dnn",
            Representation::Latent => "encoder_dnn",
        }
    }

    fn settings(self, cfg: &PipelineConfig) -> &ClassifierSettings {
        match self {
            Representation::Features => &cfg.classifier,
            Representation::Latent => &cfg.encoded_classifier,
        }
    }
}

const PARTS: [&str; 3] = ["train", "val", "test"];

/// Artifact locations inside the work directory.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, sub: &str) -> CliResult<PathBuf> {
        let d = self.root.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn selection(&self) -> PathBuf {
        self.root.join("selection.json")
    }

    fn preprocess(&self) -> PathBuf {
        self.root.join("features").join("preprocess.json")
    }

    fn matrix(&self, repr: Representation, part: &str) -> PathBuf {
        self.root.join(repr.name()).join(format!("{part}.json"))
    }

    fn ae_model(&self) -> PathBuf {
        self.root.join("ae").join("model.json")
    }

    fn model(&self, name: &str) -> PathBuf {
        self.root.join("models").join(name).join("model.json")
    }

    /// Marker present while a stage runs; left behind if it fails.
    pub fn incomplete_marker(&self, stage: &str) -> PathBuf {
        self.root.join(format!("{stage}.incomplete"))
    }
}

/// Wall-clock fields, kept apart from the deterministic report body.
pub struct Meta {
    started: SystemTime,
    clock: Instant,
}

impl Meta {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    fn finish(&self, mut report: Value) -> Value {
        let started = self
            .started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        report["meta"] = json!({
            "started_unix": started,
            "elapsed_seconds": self.clock.elapsed().as_secs_f64(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        report
    }
}

/// Everything later stages need from `preprocess`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PreprocessState {
    schema: SchemaSpec,
    selected: Vec<String>,
    pipeline: FeaturePipeline,
    n_classes: usize,
    split_seed: u64,
}

fn write_report(path: &Path, report: &Value) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(write_json(path, report)?)
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn load_schema(cfg: &PipelineConfig) -> CliResult<SchemaSpec> {
    Ok(SchemaSpec::from_json_file(cfg.schema_path()?)?)
}

fn load_preprocess(layout: &Layout) -> CliResult<PreprocessState> {
    let p = layout.preprocess();
    if !p.exists() {
        return Err(CliError::Config(format!(
            "{} not found; run `preprocess` first",
            p.display()
        )));
    }
    Ok(read_json(&p)?)
}

fn load_part(layout: &Layout, repr: Representation, part: &str) -> CliResult<(FeatureMatrix, Vec<usize>)> {
    let p = layout.matrix(repr, part);
    if !p.exists() {
        let stage = match repr {
            Representation::Features => "preprocess",
            Representation::Latent => "encode",
        };
        return Err(CliError::Config(format!(
            "{} not found; run `{stage}` first",
            p.display()
        )));
    }
    let (m, targets) = FeatureMatrix::load(&p)?;
    let targets = targets.ok_or_else(|| Error::MalformedArtifact {
        path: p.clone(),
        reason: "matrix has no targets".into(),
    })?;
    Ok((m, targets))
}

// ---------------------------------------------------------------------------

pub fn stats(cfg: &PipelineConfig, layout: &Layout, meta: &Meta) -> CliResult<Value> {
    let schema = load_schema(cfg)?;
    let table = ingest_csv(cfg.data_path()?, &schema)?;
    let report = json!({ "command": "stats", "summary": to_value(&summarize(&table)) });
    let report = meta.finish(report);
    write_report(&layout.root().join("summary.json"), &report)?;
    Ok(report)
}

pub fn associate(cfg: &PipelineConfig, layout: &Layout, meta: &Meta) -> CliResult<Value> {
    let schema = load_schema(cfg)?;
    let table = impute(&ingest_csv(cfg.data_path()?, &schema)?)?;
    let a = &cfg.association;
    let matrix = association_matrix(&table, a.n_bins, a.bias_corrected);
    matrix.save_csv(&layout.root().join("association.csv"))?;
    let selection = select_features(&table, a.threshold, a.n_bins, a.bias_corrected);
    write_json(&layout.selection(), &selection)?;
    Ok(meta.finish(json!({
        "command": "associate",
        "rows": table.n_rows(),
        "selection": to_value(&selection),
    })))
}

pub fn preprocess(cfg: &PipelineConfig, layout: &Layout, meta: &Meta) -> CliResult<Value> {
    let schema = load_schema(cfg)?;
    let sel_path = layout.selection();
    if !sel_path.exists() {
        return Err(CliError::Config(format!(
            "{} not found; run `associate` first",
            sel_path.display()
        )));
    }
    let selection: SelectionReport = read_json(&sel_path)?;
    if selection.selected.is_empty() {
        return Err(CliError::Config(format!(
            "no feature reaches association threshold {}",
            selection.threshold
        )));
    }
    let schema = schema.project(&selection.selected)?;
    let table = impute(&ingest_csv(cfg.data_path()?, &schema)?)?;
    let split_seed = derive_seed(cfg.seed, "split");
    let split = stratified_split(table.targets(), cfg.split.ratios, split_seed)?;
    let train = table.select_rows(&split.train);
    let pipeline = FeaturePipeline::fit(&train, &selection.selected)?;
    let dir = layout.dir("features")?;
    let mut parts = serde_json::Map::new();
    for (name, rows) in PARTS.iter().zip([&split.train, &split.val, &split.test]) {
        let part = table.select_rows(rows);
        let (m, unseen) = pipeline.transform(&part)?;
        m.save(&dir.join(format!("{name}.json")), Some(part.targets()))?;
        parts.insert(name.to_string(), json!({ "rows": m.n_rows(), "unseen_category_cells": unseen }));
    }
    write_json(&dir.join("splits.json"), &split)?;
    let state = PreprocessState {
        n_classes: schema.target_cardinality,
        schema,
        selected: selection.selected.clone(),
        pipeline,
        split_seed,
    };
    write_json(&layout.preprocess(), &state)?;
    Ok(meta.finish(json!({
        "command": "preprocess",
        "selected": selection.selected,
        "width": state.pipeline.width(),
        "dropped_rows": table.dropped_rows(),
        "parts": parts,
        "seed": split_seed,
    })))
}

pub fn train_ae(cfg: &PipelineConfig, layout: &Layout, meta: &Meta) -> CliResult<Value> {
    let (train, _) = load_part(layout, Representation::Features, "train")?;
    let (val, _) = load_part(layout, Representation::Features, "val")?;
    let ae_seed = derive_seed(cfg.seed, "autoencoder");
    let ae_cfg = cfg.autoencoder.to_config(train.n_cols(), ae_seed);
    ae_cfg.validate()?;
    let (ae, history) = train_autoencoder(&ae_cfg, &train, &val)?;
    layout.dir("ae")?;
    let file = ModelFile::new(
        ae.spec.clone(),
        BTreeMap::from([("autoencoder".to_string(), ae_seed)]),
        json!({ "kind": "autoencoder", "config": to_value(&ae_cfg) }),
    );
    save_model(&layout.ae_model(), file, &ae.params)?;
    let report = meta.finish(json!({
        "command": "train-ae",
        "config": to_value(&ae_cfg),
        "history": to_value(&history),
        "final_val_loss": history.val_loss.last(),
    }));
    write_report(&layout.root().join("ae").join("history.json"), &report)?;
    Ok(report)
}

fn load_autoencoder(layout: &Layout) -> CliResult<Autoencoder> {
    let path = layout.ae_model();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{} not found; run `train-ae` first",
            path.display()
        )));
    }
    let (file, params) = load_model(&path)?;
    let config: AutoencoderConfig =
        serde_json::from_value(file.training["config"].clone()).map_err(|e| Error::MalformedArtifact {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    Ok(Autoencoder::from_parts(config, params)?)
}

pub fn encode_stage(layout: &Layout, meta: &Meta) -> CliResult<Value> {
    let ae = load_autoencoder(layout)?;
    let dir = layout.dir("latent")?;
    let mut parts = serde_json::Map::new();
    for part in PARTS {
        let (x, y) = load_part(layout, Representation::Features, part)?;
        let z = encode(&ae, &x)?;
        z.save(&dir.join(format!("{part}.json")), Some(&y))?;
        parts.insert(part.into(), json!({ "rows": z.n_rows(), "width": z.n_cols() }));
    }
    Ok(meta.finish(json!({ "command": "encode", "parts": parts })))
}

#[derive(Serialize)]
struct SplitMetrics {
    train: MetricsReport,
    val: MetricsReport,
    test: MetricsReport,
}

pub fn train(
    cfg: &PipelineConfig,
    layout: &Layout,
    meta: &Meta,
    repr: Representation,
    name: Option<&str>,
) -> CliResult<Value> {
    let state = load_preprocess(layout)?;
    let k = state.n_classes;
    let (tx, ty) = load_part(layout, repr, "train")?;
    let (vx, vy) = load_part(layout, repr, "val")?;
    let (sx, sy) = load_part(layout, repr, "test")?;
    let seed = derive_seed(cfg.seed, &format!("classifier:{}", repr.name()));
    let clf_cfg = repr.settings(cfg).to_config(seed);
    let weights = if clf_cfg.use_class_weights {
        Some(compute_class_weights(&ty, k)?)
    } else {
        None
    };
    let (model, history) = train_classifier(&clf_cfg, tx.view(), &ty, vx.view(), &vy, k, weights.as_ref())?;
    let score = |x: &FeatureMatrix, y: &[usize]| -> CliResult<MetricsReport> {
        Ok(MetricsReport::evaluate(&model.predict(x.view())?, y, k)?)
    };
    let metrics = SplitMetrics {
        train: score(&tx, &ty)?,
        val: score(&vx, &vy)?,
        test: score(&sx, &sy)?,
    };
    let name = name.unwrap_or(repr.default_model_name());
    let model_path = layout.model(name);
    std::fs::create_dir_all(model_path.parent().expect("model dir"))
        .map_err(|e| Error::io(&model_path, e))?;
    let file = ModelFile::new(
        model.spec.clone(),
        BTreeMap::from([("classifier".to_string(), seed)]),
        json!({
            "kind": "classifier",
            "representation": repr,
            "n_classes": k,
            "config": to_value(&clf_cfg),
            "class_weights": history.class_weights,
        }),
    );
    save_model(&model_path, file, &model.params)?;
    let report = meta.finish(json!({
        "command": "train",
        "model": name,
        "representation": repr,
        "config": to_value(&clf_cfg),
        "class_weights": history.class_weights,
        "best_epoch": history.best_epoch,
        "history": to_value(&history.epochs),
        "metrics": to_value(&metrics),
    }));
    write_report(&model_path.with_file_name("report.json"), &report)?;
    Ok(report)
}

pub fn grid(cfg: &PipelineConfig, layout: &Layout, meta: &Meta, repr: Representation) -> CliResult<Value> {
    let state = load_preprocess(layout)?;
    let (tx, ty) = load_part(layout, repr, "train")?;
    let (vx, vy) = load_part(layout, repr, "val")?;
    let master = derive_seed(cfg.seed, &format!("grid:{}", repr.name()));
    let base = repr.settings(cfg).to_config(master);
    let report = grid_search(&cfg.grid, &base, tx.view(), &ty, vx.view(), &vy, state.n_classes, master)?;
    let dir = layout.dir("grid")?;
    report.save_csv(&dir.join(format!("{}.csv", repr.name())))?;
    let best = report.best().map(|b| to_value(&b.config));
    let out = meta.finish(json!({
        "command": "grid",
        "representation": repr,
        "rows": report.cells.len(),
        "best": best,
        "report": to_value(&report),
    }));
    write_report(&dir.join(format!("{}.json", repr.name())), &out)?;
    Ok(out)
}

fn cv_result(cfg: &PipelineConfig, layout: &Layout, repr: Representation, settings: &ClassifierSettings) -> CliResult<(CvResult, ClassifierConfig)> {
    let state = load_preprocess(layout)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for part in PARTS {
        let (x, y) = load_part(layout, repr, part)?;
        xs.push(x.values);
        ys.extend(y);
    }
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let x = concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    // weighted and unweighted runs on one representation share folds and
    // fold seeds, so they form a paired comparison
    let seed = derive_seed(cfg.seed, &format!("cv:{}", repr.name()));
    let clf_cfg = settings.to_config(seed);
    let result = cross_validate(classifier_runner(&clf_cfg, state.n_classes), x.view(), &ys, state.n_classes, cfg.cv.k, seed)?;
    Ok((result, clf_cfg))
}

pub fn cv(
    cfg: &PipelineConfig,
    layout: &Layout,
    meta: &Meta,
    repr: Representation,
    name: Option<&str>,
) -> CliResult<Value> {
    let name = name.unwrap_or(repr.default_model_name());
    let (result, clf_cfg) = cv_result(cfg, layout, repr, repr.settings(cfg))?;
    write_cv(layout, meta, name, repr, &clf_cfg, &result)
}

fn write_cv(
    layout: &Layout,
    meta: &Meta,
    name: &str,
    repr: Representation,
    clf_cfg: &ClassifierConfig,
    result: &CvResult,
) -> CliResult<Value> {
    let dir = layout.dir("cv")?;
    result.save_csv(&dir.join(format!("{name}.csv")))?;
    let out = meta.finish(json!({
        "command": "cv",
        "model": name,
        "representation": repr,
        "config": to_value(clf_cfg),
        "result": to_value(result),
    }));
    write_report(&dir.join(format!("{name}.json")), &out)?;
    Ok(out)
}

pub fn predict(
    layout: &Layout,
    meta: &Meta,
    input: &Path,
    model_name: &str,
    output: Option<&Path>,
) -> CliResult<Value> {
    if !input.exists() {
        return Err(CliError::Config(format!("input file {} does not exist", input.display())));
    }
    let state = load_preprocess(layout)?;
    let model_path = layout.model(model_name);
    if !model_path.exists() {
        return Err(CliError::Config(format!(
            "{} not found; run `train` first",
            model_path.display()
        )));
    }
    let (file, params) = load_model(&model_path)?;
    let repr: Representation = serde_json::from_value(file.training["representation"].clone())
        .map_err(|e| Error::MalformedArtifact {
            path: model_path.clone(),
            reason: e.to_string(),
        })?;
    let (table, labels) = ingest_for_scoring(input, &state.schema)?;
    let (mut x, unseen) = state.pipeline.transform(&impute(&table)?)?;
    if repr == Representation::Latent {
        x = encode(&load_autoencoder(layout)?, &x)?;
    }
    let preds = severity_core::models::predict(&file.spec, &params, x.view())?;

    let out_path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| layout.root().join("predictions.csv"));
    let mut text = String::from("row,predicted,actual\n");
    for (i, (p, a)) in preds.iter().zip(&labels).enumerate() {
        let actual = a.map(|a| a.to_string()).unwrap_or_default();
        text.push_str(&format!("{i},{p},{actual}\n"));
    }
    std::fs::write(&out_path, text).map_err(|e| Error::io(&out_path, e))?;

    let (lp, ly): (Vec<usize>, Vec<usize>) = preds
        .iter()
        .zip(&labels)
        .filter_map(|(&p, a)| a.map(|a| (p, a)))
        .unzip();
    let metrics = if ly.is_empty() {
        Value::Null
    } else {
        to_value(&MetricsReport::from_confusion(confusion(&lp, &ly, state.n_classes)?)?)
    };
    let mut counts = vec![0usize; state.n_classes];
    for &p in &preds {
        counts[p - 1] += 1;
    }
    let report = meta.finish(json!({
        "command": "predict",
        "model": model_name,
        "rows": preds.len(),
        "labelled_rows": ly.len(),
        "unseen_category_cells": unseen,
        "predicted_counts": counts,
        "predictions": out_path,
        "metrics": metrics,
    }));
    write_report(&out_path.with_extension("json"), &report)?;
    Ok(report)
}

/// associate -> preprocess -> train-ae -> encode -> train (both inputs) ->
/// cv (both inputs, plus the features model without class weights).
pub fn pipeline(cfg: &PipelineConfig, layout: &Layout, meta: &Meta) -> CliResult<Value> {
    let mut stages = serde_json::Map::new();
    let mut record = |name: &str, v: Value| {
        let mut v = v;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("meta");
            obj.remove("history");
        }
        stages.insert(name.to_string(), v);
    };
    record("associate", associate(cfg, layout, meta)?);
    record("preprocess", preprocess(cfg, layout, meta)?);
    record("train-ae", train_ae(cfg, layout, meta)?);
    record("encode", encode_stage(layout, meta)?);
    record("train:dnn", train(cfg, layout, meta, Representation::Features, None)?);
    record("train:encoder_dnn", train(cfg, layout, meta, Representation::Latent, None)?);

    let unweighted = ClassifierSettings {
        use_class_weights: false,
        ..cfg.classifier.clone()
    };
    let runs = [
        ("Encoder + DNN", "encoder_dnn", Representation::Latent, cfg.encoded_classifier.clone()),
        ("DNN", "dnn", Representation::Features, cfg.classifier.clone()),
        ("DNN without class weights", "dnn_unweighted", Representation::Features, unweighted),
    ];
    let mut rows = Vec::new();
    let mut csv = String::from("model,ber,ber_std,accuracy,accuracy_std,class_weights\n");
    for (label, name, repr, settings) in runs {
        let (result, clf_cfg) = cv_result(cfg, layout, repr, &settings)?;
        write_cv(layout, meta, name, repr, &clf_cfg, &result)?;
        csv.push_str(&format!(
            "{label},{:?},{:?},{:?},{:?},{}\n",
            result.mean_ber, result.std_ber, result.mean_accuracy, result.std_accuracy, settings.use_class_weights
        ));
        rows.push(json!({
            "model": label,
            "ber": result.mean_ber,
            "ber_std": result.std_ber,
            "accuracy": result.mean_accuracy,
            "accuracy_std": result.std_accuracy,
            "mean_per_class_recall": result.mean_per_class_recall,
            "class_weights": settings.use_class_weights,
        }));
    }
    let csv_path = layout.root().join("table1.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let report = meta.finish(json!({
        "command": "pipeline",
        "seed": cfg.seed,
        "table": rows,
        "stages": stages,
    }));
    write_report(&layout.root().join("table1.json"), &report)?;
    Ok(report)
}

/// Parameters of the `synth` generator beyond the master seed.
pub struct SynthOptions {
    pub rows: usize,
    pub proportions: Vec<f64>,
    pub numeric: usize,
    pub categorical: usize,
    pub shift: f64,
    pub categories: usize,
    pub out_dir: PathBuf,
}

pub fn synth(cfg: &PipelineConfig, opts: &SynthOptions, meta: &Meta) -> CliResult<Value> {
    let spec = SyntheticSpec {
        n_rows: opts.rows,
        class_proportions: opts.proportions.clone(),
        n_numeric: opts.numeric,
        n_categorical: opts.categorical,
        class_shift: opts.shift,
        categories_per_column: opts.categories,
        seed: derive_seed(cfg.seed, "synthetic"),
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let table = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let data = opts.out_dir.join("data.csv");
    let schema = opts.out_dir.join("schema.json");
    write_csv(&table, &data)?;
    write_json(&schema, table.schema())?;
    Ok(meta.finish(json!({
        "command": "synth",
        "spec": to_value(&spec),
        "data": data,
        "schema": schema,
    })))
}
