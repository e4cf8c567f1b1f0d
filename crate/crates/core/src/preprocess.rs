//! Encoders fitted on training rows, dense feature assembly, and seeded
//! stratified partitioning.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::dataset::{ColumnData, ColumnKind, Table};
use crate::error::{Error, Result};
use crate::rounding::largest_remainder;
use crate::seed;

/// Category vocabulary for each encoded column, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotCodec {
    pub columns: Vec<CodecColumn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecColumn {
    pub name: String,
    pub categories: Vec<String>,
}

impl OneHotCodec {
    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.categories.len()).sum()
    }

    fn column(&self, name: &str) -> Option<&CodecColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

fn categorical_values<'a>(table: &'a Table, name: &str) -> Result<&'a [String]> {
    let idx = table
        .schema()
        .index_of(name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
    let kind = table.schema().columns[idx].kind;
    match &table.columns()[idx] {
        ColumnData::Categorical(v) if kind.is_categorical() => Ok(v),
        _ => Err(Error::WrongColumnKind {
            column: name.to_string(),
            found: kind.name(),
            expected: "categorical",
        }),
    }
}

fn numeric_values<'a>(table: &'a Table, name: &str) -> Result<&'a [f64]> {
    let idx = table
        .schema()
        .index_of(name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
    match &table.columns()[idx] {
        ColumnData::Numeric(v) => Ok(v),
        _ => Err(Error::WrongColumnKind {
            column: name.to_string(),
            found: table.schema().columns[idx].kind.name(),
            expected: "numeric",
        }),
    }
}

pub fn fit_one_hot(table: &Table, columns: &[String]) -> Result<OneHotCodec> {
    let columns = columns
        .iter()
        .map(|name| {
            let values = categorical_values(table, name)?;
            let mut seen = std::collections::HashSet::new();
            let categories = values
                .iter()
                .filter(|v| seen.insert(v.as_str()))
                .cloned()
                .collect();
            Ok(CodecColumn {
                name: name.clone(),
                categories,
            })
        })
        .collect::<Result<_>>()?;
    Ok(OneHotCodec { columns })
}

/// One-hot block for every codec column. Categories not seen at fit time
/// encode as all zeros; the second value counts such cells.
pub fn transform_one_hot(codec: &OneHotCodec, table: &Table) -> Result<(Array2<f64>, usize)> {
    let n = table.n_rows();
    let mut out = Array2::zeros((n, codec.width()));
    let mut offset = 0;
    let mut unseen = 0;
    for col in &codec.columns {
        let values = categorical_values(table, &col.name)?;
        let lookup: HashMap<&str, usize> = col
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        for (r, v) in values.iter().enumerate() {
            match lookup.get(v.as_str()) {
                Some(&i) => out[[r, offset + i]] = 1.0,
                None => unseen += 1,
            }
        }
        offset += col.categories.len();
    }
    Ok((out, unseen))
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<ColumnScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

impl ColumnScale {
    pub fn apply(&self, x: f64) -> f64 {
        if self.std > 0.0 {
            (x - self.mean) / self.std
        } else {
            0.0
        }
    }
}

pub fn fit_standardizer(table: &Table, columns: &[String]) -> Result<Standardizer> {
    let columns = columns
        .iter()
        .map(|name| {
            let v = numeric_values(table, name)?;
            let n = v.len() as f64;
            let (mean, std) = if v.is_empty() {
                (0.0, 0.0)
            } else {
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            };
            Ok(ColumnScale {
                name: name.clone(),
                mean,
                std,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Standardizer { columns })
}

pub fn transform_standardize(s: &Standardizer, table: &Table) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((table.n_rows(), s.columns.len()));
    for (j, col) in s.columns.iter().enumerate() {
        let v = numeric_values(table, &col.name)?;
        for (r, &x) in v.iter().enumerate() {
            out[[r, j]] = col.apply(x);
        }
    }
    Ok(out)
}

/// Dense design matrix with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub column_labels: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, column_labels: Vec<String>) -> Result<Self> {
        if values.ncols() != column_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns, {} labels",
                values.ncols(),
                column_labels.len()
            )));
        }
        Ok(Self {
            values,
            column_labels,
        })
    }

    /// Unlabelled matrix; columns are named `f0`, `f1`, ...
    pub fn from_array(values: Array2<f64>) -> Self {
        let column_labels = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        Self {
            values,
            column_labels,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select(ndarray::Axis(0), rows),
            column_labels: self.column_labels.clone(),
        }
    }

    /// Write the JSON manifest at `manifest` and the row-major blob next to
    /// it (same stem, `.bin`). Optional per-row targets go in the manifest.
    pub fn save(&self, manifest: &Path, targets: Option<&[usize]>) -> Result<()> {
        let blob = artifact::blob_path_for(manifest);
        artifact::write_f64_blob(&blob, self.values.iter().copied())?;
        let m = FeatureManifest {
            format_version: FEATURE_FORMAT_VERSION,
            n: self.n_rows(),
            d: self.n_cols(),
            byte_order: artifact::BYTE_ORDER.into(),
            element_type: artifact::ELEMENT_TYPE.into(),
            layout: "row-major".into(),
            blob: blob
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            labels: self.column_labels.clone(),
            targets: targets.map(<[usize]>::to_vec),
        };
        artifact::write_json(manifest, &m)
    }

    pub fn load(manifest: &Path) -> Result<(FeatureMatrix, Option<Vec<usize>>)> {
        let m: FeatureManifest = artifact::read_json(manifest)?;
        artifact::check_format(manifest, &m.byte_order, &m.element_type)?;
        if m.labels.len() != m.d || m.targets.as_ref().is_some_and(|t| t.len() != m.n) {
            return Err(Error::MalformedArtifact {
                path: manifest.to_path_buf(),
                reason: "label or target count disagrees with n/d".into(),
            });
        }
        let data = artifact::read_f64_blob(&artifact::resolve_blob(manifest, &m.blob), m.n * m.d)?;
        let values = Array2::from_shape_vec((m.n, m.d), data).map_err(|e| {
            Error::MalformedArtifact {
                path: manifest.to_path_buf(),
                reason: e.to_string(),
            }
        })?;
        Ok((
            FeatureMatrix {
                values,
                column_labels: m.labels,
            },
            m.targets,
        ))
    }
}

pub const FEATURE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureManifest {
    format_version: u32,
    n: usize,
    d: usize,
    byte_order: String,
    element_type: String,
    layout: String,
    blob: String,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    targets: Option<Vec<usize>>,
}

/// Build the design matrix: for each name in `column_order`, a numeric
/// column contributes one standardised column and a categorical column its
/// one-hot block. Returns the matrix and the count of unseen categories.
pub fn assemble(
    table: &Table,
    codec: &OneHotCodec,
    standardizer: &Standardizer,
    column_order: &[String],
) -> Result<(FeatureMatrix, usize)> {
    let n = table.n_rows();
    let mut blocks: Vec<Array2<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut unseen = 0;
    for name in column_order {
        let idx = table
            .schema()
            .index_of(name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        let kind = table.schema().columns[idx].kind;
        match kind {
            ColumnKind::Numeric => {
                let scale = standardizer
                    .columns
                    .iter()
                    .find(|c| &c.name == name)
                    .ok_or_else(|| {
                        Error::DimensionMismatch(format!("standardizer lacks column `{name}`"))
                    })?;
                let single = Standardizer {
                    columns: vec![scale.clone()],
                };
                blocks.push(transform_standardize(&single, table)?);
                labels.push(name.clone());
            }
            k if k.is_categorical() => {
                let col = codec.column(name).ok_or_else(|| {
                    Error::DimensionMismatch(format!("codec lacks column `{name}`"))
                })?;
                let single = OneHotCodec {
                    columns: vec![col.clone()],
                };
                let (block, u) = transform_one_hot(&single, table)?;
                unseen += u;
                blocks.push(block);
                labels.extend(col.categories.iter().map(|c| format!("{name}={c}")));
            }
            _ => {
                return Err(Error::WrongColumnKind {
                    column: name.clone(),
                    found: kind.name(),
                    expected: "numeric or categorical",
                })
            }
        }
    }
    let values = if blocks.is_empty() {
        Array2::zeros((n, 0))
    } else {
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        ndarray::concatenate(ndarray::Axis(1), &views)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?
    };
    if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::DimensionMismatch(format!(
            "non-finite feature at flat index {pos}; impute before assembling"
        )));
    }
    Ok((FeatureMatrix::new(values, labels)?, unseen))
}

/// Fitted codec + standardizer for a fixed feature list. This is the state a
/// trained model needs to score new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub columns: Vec<String>,
    pub codec: OneHotCodec,
    pub standardizer: Standardizer,
}

impl FeaturePipeline {
    /// Fit on `table` (normally the training rows only).
    pub fn fit(table: &Table, columns: &[String]) -> Result<Self> {
        let schema = table.schema();
        let mut ordered = Vec::new();
        let mut categorical = Vec::new();
        let mut numeric = Vec::new();
        // keep schema order regardless of the order names were given in
        for c in &schema.columns {
            if !columns.contains(&c.name) {
                continue;
            }
            match c.kind {
                ColumnKind::Numeric => numeric.push(c.name.clone()),
                k if k.is_categorical() => categorical.push(c.name.clone()),
                _ => continue,
            }
            ordered.push(c.name.clone());
        }
        if let Some(missing) = columns.iter().find(|c| schema.index_of(c).is_none()) {
            return Err(Error::UnknownColumn(missing.clone()));
        }
        Ok(Self {
            codec: fit_one_hot(table, &categorical)?,
            standardizer: fit_standardizer(table, &numeric)?,
            columns: ordered,
        })
    }

    pub fn width(&self) -> usize {
        self.codec.width() + self.standardizer.columns.len()
    }

    pub fn transform(&self, table: &Table) -> Result<(FeatureMatrix, usize)> {
        assemble(table, &self.codec, &self.standardizer, &self.columns)
    }
}

/// Disjoint train/validation/test row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];

/// Stratified train/val/test split. Within each class the rows are shuffled
/// with the seeded generator and apportioned by largest remainder.
pub fn stratified_split(labels: &[usize], ratios: [f64; 3], seed: u64) -> Result<SplitIndices> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if ratios.iter().any(|&r| !(r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios(format!(
            "ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    let mut parts = stratified_partition(labels, &ratios, seed, false).into_iter();
    Ok(SplitIndices {
        train: parts.next().unwrap_or_default(),
        val: parts.next().unwrap_or_default(),
        test: parts.next().unwrap_or_default(),
        seed,
    })
}

/// Assign rows to `k` stratified folds of (near) equal size. Ties in the
/// per-class apportioning rotate across classes, so fold sizes differ by at
/// most one row overall.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    stratified_partition(labels, &vec![1.0; k], seed, true)
}

/// Core stratified apportioning shared by splits and folds.
///
/// Classes are visited in ascending label order; each class's rows are
/// shuffled by one seeded stream and cut by largest remainder. When a class
/// has at least as many rows as there are parts, every part gets at least
/// one of them. Each part's indices are returned sorted.
pub(crate) fn stratified_partition(
    labels: &[usize],
    shares: &[f64],
    seed: u64,
    rotate_ties: bool,
) -> Vec<Vec<usize>> {
    let n_parts = shares.len();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let total_share: f64 = shares.iter().sum();
    let mut rng = seed::rng(seed);
    let mut parts = vec![Vec::new(); n_parts];
    let mut cursor = 0;
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        let n_c = rows.len();
        let tie_start = if rotate_ties { cursor } else { 0 };
        let mut counts = largest_remainder(n_c, shares, tie_start);
        if n_c >= n_parts {
            ensure_nonempty(&mut counts, n_c, shares, total_share);
        }
        if rotate_ties {
            let floors: usize = shares
                .iter()
                .map(|s| (n_c as f64 * s / total_share).floor() as usize)
                .sum();
            cursor = (cursor + n_c - floors) % n_parts;
        }
        let mut start = 0;
        for (p, &c) in counts.iter().enumerate() {
            parts[p].extend_from_slice(&rows[start..start + c]);
            start += c;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    parts
}

fn ensure_nonempty(counts: &mut [usize], n_c: usize, shares: &[f64], total_share: f64) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        // donor: the part furthest above its exact quota that can spare a row
        let donor = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 1)
            .max_by(|(i, &a), (j, &b)| {
                let ea = a as f64 - n_c as f64 * shares[*i] / total_share;
                let eb = b as f64 - n_c as f64 * shares[*j] / total_share;
                ea.total_cmp(&eb).then(j.cmp(i))
            })
            .map(|(i, _)| i);
        match donor {
            Some(d) => {
                counts[d] -= 1;
                counts[empty] += 1;
            }
            None => break,
        }
    }
}
