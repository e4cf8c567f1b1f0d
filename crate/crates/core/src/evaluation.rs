//! Confusion-matrix metrics, stratified k-fold cross-validation and
//! exhaustive hyperparameter grid search.
//!
//! Balanced error rate (BER) is one minus the unweighted mean of per-class
//! recalls, so a majority-class predictor on imbalanced data scores poorly
//! even when its accuracy is high.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{compute_class_weights, train_classifier, ClassifierConfig};
use crate::preprocess::{stratified_folds, stratified_partition};
use crate::seed;

/// Rows are true classes, columns predicted classes (both `1..=K`, stored
/// zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, class_idx: usize) -> u64 {
        self.counts[class_idx].iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// Recall per class; `None` for classes with no true rows.
    pub fn per_class_recall(&self) -> Vec<Option<f64>> {
        (0..self.k())
            .map(|c| {
                let rt = self.row_total(c);
                (rt > 0).then(|| self.counts[c][c] as f64 / rt as f64)
            })
            .collect()
    }

    /// Sum of two matrices of the same size.
    pub fn merged(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    let mut m = ConfusionMatrix::zeros(k);
    for (&p, &t) in preds.iter().zip(labels) {
        for l in [p, t] {
            if l < 1 || l > k {
                return Err(Error::LabelOutOfRange { label: l, k });
            }
        }
        m.counts[t - 1][p - 1] += 1;
    }
    Ok(m)
}

/// BER over represented classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerResult {
    pub ber: f64,
    /// Classes (1-based) with no true rows, left out of the mean.
    pub excluded_classes: Vec<usize>,
}

pub fn ber(m: &ConfusionMatrix) -> Result<BerResult> {
    if m.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let recalls = m.per_class_recall();
    let present: Vec<f64> = recalls.iter().flatten().copied().collect();
    let excluded_classes = recalls
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(c, _)| c + 1)
        .collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok(BerResult {
        ber: 1.0 - mean,
        excluded_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class_recall: Vec<Option<f64>>,
    pub ber: f64,
    /// Non-empty when some class had no true rows; BER then averages over
    /// the remaining classes only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_classes: Vec<usize>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let b = ber(&confusion)?;
        Ok(Self {
            accuracy: confusion.accuracy(),
            per_class_recall: confusion.per_class_recall(),
            ber: b.ber,
            excluded_classes: b.excluded_classes,
            confusion,
        })
    }

    pub fn evaluate(preds: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        Self::from_confusion(confusion(preds, labels, k)?)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Data handed to a cross-validation runner for one fold.
pub struct FoldData<'a> {
    pub fold: usize,
    pub seed: u64,
    pub train_x: ArrayView2<'a, f64>,
    pub train_y: &'a [usize],
    pub val_x: ArrayView2<'a, f64>,
    pub val_y: &'a [usize],
    pub eval_x: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_eval: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_ber: f64,
    pub std_ber: f64,
    /// Mean per-class recall over folds (classes absent from a fold skipped).
    pub mean_per_class_recall: Vec<Option<f64>>,
}

impl CvResult {
    /// One row per fold plus `mean` and `std` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.mean_per_class_recall.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["fold".to_string(), "seed".into(), "n_eval".into(), "accuracy".into(), "ber".into()];
        header.extend((1..=k).map(|c| format!("recall_{c}")));
        w.write_record(&header)?;
        let fmt = |r: &Option<f64>| r.map(|v| format!("{v:?}")).unwrap_or_default();
        for f in &self.folds {
            let mut rec = vec![
                f.fold.to_string(),
                f.seed.to_string(),
                f.n_eval.to_string(),
                format!("{:?}", f.metrics.accuracy),
                format!("{:?}", f.metrics.ber),
            ];
            rec.extend(f.metrics.per_class_recall.iter().map(fmt));
            w.write_record(&rec)?;
        }
        let mut rec = vec![
            "mean".to_string(),
            String::new(),
            String::new(),
            format!("{:?}", self.mean_accuracy),
            format!("{:?}", self.mean_ber),
        ];
        rec.extend(self.mean_per_class_recall.iter().map(fmt));
        w.write_record(&rec)?;
        let mut rec = vec![
            "std".to_string(),
            String::new(),
            String::new(),
            format!("{:?}", self.std_accuracy),
            format!("{:?}", self.std_ber),
        ];
        rec.extend(std::iter::repeat_n(String::new(), k));
        w.write_record(&rec)?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Stratified fold membership used by [`cross_validate`].
pub fn cv_folds(labels: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    stratified_folds(labels, k, seed::derive_seed(seed, "cv-folds"))
}

/// Stratified k-fold cross-validation.
///
/// Fold `i` is the evaluation set; the remaining rows are split 75/25
/// (stratified) into training and validation rows for checkpointing. Each
/// fold gets a seed derived from `seed` and its index. `runner` returns
/// predicted labels for `eval_x`. Folds run in parallel on the current rayon
/// pool and are reported in fold order.
pub fn cross_validate<F>(
    runner: F,
    features: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<CvResult>
where
    F: Fn(FoldData<'_>) -> Result<Vec<usize>> + Sync,
{
    if k < 2 {
        return Err(Error::InvalidConfig("cross-validation needs k >= 2".into()));
    }
    if features.nrows() != labels.len() {
        return Err(Error::LengthMismatch(features.nrows(), labels.len()));
    }
    let counts = crate::dataset::class_counts(labels, n_classes);
    if let Some(&bad) = labels.iter().find(|&&l| l < 1 || l > n_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            k: n_classes,
        });
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 && count < k {
            return Err(Error::ClassTooSmall {
                class: c + 1,
                count,
                k,
            });
        }
    }
    let folds = cv_folds(labels, k, seed);
    let fold_results: Vec<Result<FoldResult>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let fold_seed = seed::derive_indexed(seed, "cv-fold", i as u64);
            let eval_rows = &folds[i];
            let rest: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let rest_labels: Vec<usize> = rest.iter().map(|&r| labels[r]).collect();
            let sub = stratified_partition(
                &rest_labels,
                &[0.75, 0.25],
                seed::derive_seed(fold_seed, "cv-inner-split"),
                false,
            );
            let train_rows: Vec<usize> = sub[0].iter().map(|&j| rest[j]).collect();
            let val_rows: Vec<usize> = sub[1].iter().map(|&j| rest[j]).collect();
            let train_x = features.select(Axis(0), &train_rows);
            let val_x = features.select(Axis(0), &val_rows);
            let eval_x = features.select(Axis(0), eval_rows);
            let train_y: Vec<usize> = train_rows.iter().map(|&r| labels[r]).collect();
            let val_y: Vec<usize> = val_rows.iter().map(|&r| labels[r]).collect();
            let eval_y: Vec<usize> = eval_rows.iter().map(|&r| labels[r]).collect();
            let preds = runner(FoldData {
                fold: i,
                seed: fold_seed,
                train_x: train_x.view(),
                train_y: &train_y,
                val_x: val_x.view(),
                val_y: &val_y,
                eval_x: eval_x.view(),
            })?;
            Ok(FoldResult {
                fold: i,
                seed: fold_seed,
                n_train: train_rows.len(),
                n_val: val_rows.len(),
                n_eval: eval_rows.len(),
                metrics: MetricsReport::evaluate(&preds, &eval_y, n_classes)?,
            })
        })
        .collect();
    let folds: Vec<FoldResult> = fold_results.into_iter().collect::<Result<_>>()?;
    let accs: Vec<f64> = folds.iter().map(|f| f.metrics.accuracy).collect();
    let bers: Vec<f64> = folds.iter().map(|f| f.metrics.ber).collect();
    let mean_per_class_recall = (0..n_classes)
        .map(|c| {
            let vals: Vec<f64> = folds
                .iter()
                .filter_map(|f| f.metrics.per_class_recall[c])
                .collect();
            (!vals.is_empty()).then(|| mean(&vals))
        })
        .collect();
    Ok(CvResult {
        k,
        seed,
        mean_accuracy: mean(&accs),
        std_accuracy: sample_std(&accs),
        mean_ber: mean(&bers),
        std_ber: sample_std(&bers),
        mean_per_class_recall,
        folds,
    })
}

/// CV runner that trains a fresh classifier per fold.
pub fn classifier_runner(
    cfg: &ClassifierConfig,
    n_classes: usize,
) -> impl Fn(FoldData<'_>) -> Result<Vec<usize>> + Sync + '_ {
    move |fold: FoldData<'_>| {
        let fold_cfg = ClassifierConfig {
            seed: fold.seed,
            ..cfg.clone()
        };
        let weights = if cfg.use_class_weights {
            Some(compute_class_weights(fold.train_y, n_classes)?)
        } else {
            None
        };
        let (model, _) = train_classifier(
            &fold_cfg,
            fold.train_x,
            fold.train_y,
            fold.val_x,
            fold.val_y,
            n_classes,
            weights.as_ref(),
        )?;
        model.predict(fold.eval_x)
    }
}

// ---------------------------------------------------------------------------
// Grid search

/// Candidate values per tuned hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub initial_neurons: Vec<usize>,
    pub initial_dropout: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub l2_penalty: Vec<f64>,
}

impl GridSpec {
    /// 3 x 3 x 3 x 2 = 54 cells.
    pub fn paper() -> Self {
        Self {
            initial_neurons: vec![1218, 2436, 3654],
            initial_dropout: vec![0.2, 0.3, 0.4],
            batch_size: vec![2000, 5000, 10000],
            l2_penalty: vec![0.001, 0.0001],
        }
    }

    pub fn size(&self) -> usize {
        self.initial_neurons.len()
            * self.initial_dropout.len()
            * self.batch_size.len()
            * self.l2_penalty.len()
    }

    /// Cartesian product in enumeration order (neurons outermost, L2
    /// innermost), applied on top of `base`.
    pub fn cells(&self, base: &ClassifierConfig) -> Vec<ClassifierConfig> {
        let mut out = Vec::with_capacity(self.size());
        for &n in &self.initial_neurons {
            for &d in &self.initial_dropout {
                for &b in &self.batch_size {
                    for &l2 in &self.l2_penalty {
                        out.push(ClassifierConfig {
                            initial_neurons: n,
                            initial_dropout: d,
                            batch_size: b,
                            l2_penalty: l2,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Seed for a grid cell: a function of the master seed and the cell's values,
/// so duplicate cells train identically.
pub fn cell_seed(master: u64, cfg: &ClassifierConfig) -> u64 {
    let key = format!(
        "grid:{}:{:?}:{}:{:?}",
        cfg.initial_neurons, cfg.initial_dropout, cfg.batch_size, cfg.l2_penalty
    );
    seed::derive_seed(master, &key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellResult {
    /// 1 = best.
    pub rank: usize,
    /// Position in enumeration order.
    pub index: usize,
    pub config: ClassifierConfig,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid: GridSpec,
    pub seed: u64,
    /// All cells, best first.
    pub cells: Vec<GridCellResult>,
}

impl GridReport {
    pub fn best(&self) -> Option<&GridCellResult> {
        self.cells.first()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "rank",
            "index",
            "initial_neurons",
            "initial_dropout",
            "batch_size",
            "l2_penalty",
            "seed",
            "val_ber",
            "val_accuracy",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.rank.to_string(),
                c.index.to_string(),
                c.config.initial_neurons.to_string(),
                format!("{:?}", c.config.initial_dropout),
                c.config.batch_size.to_string(),
                format!("{:?}", c.config.l2_penalty),
                c.config.seed.to_string(),
                format!("{:?}", c.metrics.ber),
                format!("{:?}", c.metrics.accuracy),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Evaluate every grid cell with `evaluate_cell` (which receives the cell
/// config with its derived seed) and rank by BER ascending, then accuracy
/// descending, then enumeration order.
pub fn grid_search_with<F>(
    grid: &GridSpec,
    base: &ClassifierConfig,
    master_seed: u64,
    evaluate_cell: F,
) -> Result<GridReport>
where
    F: Fn(&ClassifierConfig) -> Result<MetricsReport> + Sync,
{
    let cells: Vec<ClassifierConfig> = grid
        .cells(base)
        .into_iter()
        .map(|c| ClassifierConfig {
            seed: cell_seed(master_seed, &c),
            ..c
        })
        .collect();
    let results: Vec<Result<MetricsReport>> = cells.par_iter().map(&evaluate_cell).collect();
    let mut ranked: Vec<GridCellResult> = cells
        .into_iter()
        .zip(results)
        .enumerate()
        .map(|(index, (config, metrics))| {
            Ok(GridCellResult {
                rank: 0,
                index,
                config,
                metrics: metrics?,
            })
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| {
        a.metrics
            .ber
            .total_cmp(&b.metrics.ber)
            .then(b.metrics.accuracy.total_cmp(&a.metrics.accuracy))
            .then(a.index.cmp(&b.index))
    });
    for (i, c) in ranked.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(GridReport {
        grid: grid.clone(),
        seed: master_seed,
        cells: ranked,
    })
}

/// Train one classifier per grid cell on the training split and score it on
/// the validation split.
pub fn grid_search(
    grid: &GridSpec,
    base: &ClassifierConfig,
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    val_x: ArrayView2<f64>,
    val_y: &[usize],
    n_classes: usize,
    master_seed: u64,
) -> Result<GridReport> {
    let weights = if base.use_class_weights {
        Some(compute_class_weights(train_y, n_classes)?)
    } else {
        None
    };
    grid_search_with(grid, base, master_seed, |cfg| {
        let (model, _) = train_classifier(
            cfg,
            train_x,
            train_y,
            val_x,
            val_y,
            n_classes,
            weights.as_ref(),
        )?;
        MetricsReport::evaluate(&model.predict(val_x)?, val_y, n_classes)
    })
}
