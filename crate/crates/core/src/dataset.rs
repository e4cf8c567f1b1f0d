//! Mixed-type tabular data: declarative schema, CSV ingestion, imputation,
//! summary statistics and a seeded synthetic generator.
//!
//! A [`Table`] is column-oriented. Numeric columns hold `f64`, categorical and
//! boolean columns hold trimmed text, and the single target column holds class
//! labels in `1..=K`. Missing cells are tracked in a per-column mask; the
//! target column never has missing cells because rows without a label are
//! dropped during ingestion.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rounding::largest_remainder;
use crate::seed;

/// Category assigned to missing categorical cells by [`impute`].
pub const UNKNOWN_CATEGORY: &str = "Unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Boolean,
    Target,
}

impl ColumnKind {
    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Boolean => "boolean",
            ColumnKind::Target => "target",
        }
    }

    /// Categorical and boolean columns are both encoded as categories.
    pub fn is_categorical(self) -> bool {
        matches!(self, ColumnKind::Categorical | ColumnKind::Boolean)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered column declarations plus the number of target classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub columns: Vec<ColumnSpec>,
    pub target_cardinality: usize,
}

impl SchemaSpec {
    pub fn new(columns: Vec<ColumnSpec>, target_cardinality: usize) -> Result<Self> {
        let schema = Self {
            columns,
            target_cardinality,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: SchemaSpec = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let targets = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Target)
            .count();
        if targets != 1 {
            return Err(Error::InvalidSchema(format!(
                "expected exactly one target column, found {targets}"
            )));
        }
        if self.target_cardinality < 2 {
            return Err(Error::InvalidSchema(
                "target_cardinality must be at least 2".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate column name `{}`",
                    c.name
                )));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn target_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.kind == ColumnKind::Target)
            .expect("validated schema has a target column")
    }

    pub fn target_name(&self) -> &str {
        &self.columns[self.target_index()].name
    }

    /// Schema restricted to `names` (in schema order) plus the target.
    pub fn project(&self, names: &[String]) -> Result<SchemaSpec> {
        for n in names {
            if self.index_of(n).is_none() {
                return Err(Error::UnknownColumn(n.clone()));
            }
        }
        let columns = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Target || names.contains(&c.name))
            .cloned()
            .collect();
        SchemaSpec::new(columns, self.target_cardinality)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
    Target(Vec<usize>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
            ColumnData::Target(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
            ColumnData::Target(v) => ColumnData::Target(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    /// Per-row category labels. Numeric values are rendered with `{}`.
    pub fn as_labels(&self) -> Vec<String> {
        match self {
            ColumnData::Numeric(v) => v.iter().map(|x| x.to_string()).collect(),
            ColumnData::Categorical(v) => v.clone(),
            ColumnData::Target(v) => v.iter().map(|x| x.to_string()).collect(),
        }
    }
}

/// Column-oriented dataset with a missing-value mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    schema: SchemaSpec,
    columns: Vec<ColumnData>,
    missing: Vec<Vec<bool>>,
    n_rows: usize,
    dropped_rows: usize,
}

impl Table {
    /// Build a fully observed table. Column data must line up with the schema.
    pub fn from_columns(schema: SchemaSpec, columns: Vec<ColumnData>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, ColumnData::len);
        let missing = columns.iter().map(|c| vec![false; c.len()]).collect();
        Self::with_missing(schema, columns, missing, 0).map(|t| {
            debug_assert_eq!(t.n_rows, n_rows);
            t
        })
    }

    pub fn with_missing(
        schema: SchemaSpec,
        columns: Vec<ColumnData>,
        missing: Vec<Vec<bool>>,
        dropped_rows: usize,
    ) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.columns.len() || missing.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} schema columns, {} data columns",
                schema.columns.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, ColumnData::len);
        for ((spec, data), mask) in schema.columns.iter().zip(&columns).zip(&missing) {
            if data.len() != n_rows || mask.len() != n_rows {
                return Err(Error::LengthMismatch(data.len(), n_rows));
            }
            let ok = matches!(
                (spec.kind, data),
                (ColumnKind::Numeric, ColumnData::Numeric(_))
                    | (ColumnKind::Categorical, ColumnData::Categorical(_))
                    | (ColumnKind::Boolean, ColumnData::Categorical(_))
                    | (ColumnKind::Target, ColumnData::Target(_))
            );
            if !ok {
                return Err(Error::WrongColumnKind {
                    column: spec.name.clone(),
                    found: data_kind_name(data),
                    expected: spec.kind.name(),
                });
            }
            if let ColumnData::Target(labels) = data {
                let k = schema.target_cardinality;
                if let Some(pos) = labels.iter().position(|&l| l < 1 || l > k) {
                    return Err(Error::TargetOutOfRange {
                        row: pos + 1,
                        value: labels[pos].to_string(),
                        k,
                    });
                }
            }
        }
        Ok(Self {
            schema,
            columns,
            missing,
            n_rows,
            dropped_rows,
        })
    }

    pub fn schema(&self) -> &SchemaSpec {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_classes(&self) -> usize {
        self.schema.target_cardinality
    }

    /// Rows discarded during ingestion because the target was blank.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn missing_mask(&self, name: &str) -> Option<&[bool]> {
        self.schema
            .index_of(name)
            .map(|i| self.missing[i].as_slice())
    }

    pub fn missing_count(&self) -> usize {
        self.missing
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn targets(&self) -> &[usize] {
        match &self.columns[self.schema.target_index()] {
            ColumnData::Target(v) => v,
            _ => unreachable!("target column holds labels"),
        }
    }

    /// New table holding `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            missing: self
                .missing
                .iter()
                .map(|m| rows.iter().map(|&r| m[r]).collect())
                .collect(),
            n_rows: rows.len(),
            dropped_rows: self.dropped_rows,
        }
    }

    /// New table keeping only `names` (and the target), in schema order.
    pub fn select_columns(&self, names: &[String]) -> Result<Table> {
        let schema = self.schema.project(names)?;
        let mut columns = Vec::new();
        let mut missing = Vec::new();
        for c in &schema.columns {
            let i = self.schema.index_of(&c.name).expect("projected column exists");
            columns.push(self.columns[i].clone());
            missing.push(self.missing[i].clone());
        }
        Ok(Table {
            schema,
            columns,
            missing,
            n_rows: self.n_rows,
            dropped_rows: self.dropped_rows,
        })
    }
}

fn data_kind_name(d: &ColumnData) -> &'static str {
    match d {
        ColumnData::Numeric(_) => "numeric",
        ColumnData::Categorical(_) => "categorical",
        ColumnData::Target(_) => "target",
    }
}

fn normalise_boolean(raw: &str) -> String {
    if raw.eq_ignore_ascii_case("true") {
        "true".to_string()
    } else if raw.eq_ignore_ascii_case("false") {
        "false".to_string()
    } else {
        raw.to_string()
    }
}

/// Load a CSV file according to `schema`.
pub fn ingest_csv(path: &Path, schema: &SchemaSpec) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema).map_err(|e| match e {
        Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

/// Load CSV data from any reader. Extra CSV columns are ignored.
pub fn ingest_reader<R: Read>(reader: R, schema: &SchemaSpec) -> Result<Table> {
    read_table(reader, schema, false).map(|(t, _)| t)
}

/// Load rows to be scored by a trained model. Every row is kept: the target
/// column may be absent or blank, and the labels that are present come back
/// separately. The returned table holds placeholder targets (class 1) for
/// unlabelled rows, so only its feature columns are meaningful.
pub fn ingest_for_scoring(path: &Path, schema: &SchemaSpec) -> Result<(Table, Vec<Option<usize>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema, true).map_err(|e| match e {
        Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

fn read_table<R: Read>(
    reader: R,
    schema: &SchemaSpec,
    scoring: bool,
) -> Result<(Table, Vec<Option<usize>>)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile(Default::default()));
    }
    let target_idx = schema.target_index();
    let positions: Vec<Option<usize>> = schema
        .columns
        .iter()
        .enumerate()
        .map(|(ci, c)| match headers.iter().position(|h| h == c.name) {
            Some(p) => Ok(Some(p)),
            None if scoring && ci == target_idx => Ok(None),
            None => Err(Error::MissingColumn(c.name.clone())),
        })
        .collect::<Result<_>>()?;

    let k = schema.target_cardinality;
    let mut columns: Vec<ColumnData> = schema
        .columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
            ColumnKind::Categorical | ColumnKind::Boolean => ColumnData::Categorical(Vec::new()),
            ColumnKind::Target => ColumnData::Target(Vec::new()),
        })
        .collect();
    let mut missing: Vec<Vec<bool>> = vec![Vec::new(); schema.columns.len()];
    let target_pos = positions[target_idx];
    let mut dropped = 0;
    let mut seen_rows = 0;
    let mut observed = Vec::new();

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        seen_rows += 1;
        let raw_target = target_pos.and_then(|p| record.get(p)).unwrap_or("");
        let label = if raw_target.is_empty() {
            if !scoring {
                dropped += 1;
                continue;
            }
            None
        } else {
            match parse_label(raw_target).filter(|&l| (1..=k).contains(&l)) {
                Some(l) => Some(l),
                None => {
                    return Err(Error::TargetOutOfRange {
                        row: row_idx + 1,
                        value: raw_target.to_string(),
                        k,
                    })
                }
            }
        };
        observed.push(label);
        let label = label.unwrap_or(1);
        for (ci, spec) in schema.columns.iter().enumerate() {
            let raw = positions[ci].and_then(|p| record.get(p)).unwrap_or("");
            match (&mut columns[ci], spec.kind) {
                (ColumnData::Target(v), _) => {
                    v.push(label);
                    missing[ci].push(false);
                }
                (ColumnData::Numeric(v), _) => match raw.parse::<f64>() {
                    Ok(x) if x.is_finite() => {
                        v.push(x);
                        missing[ci].push(false);
                    }
                    _ => {
                        v.push(f64::NAN);
                        missing[ci].push(true);
                    }
                },
                (ColumnData::Categorical(v), kind) => {
                    let is_missing = raw.is_empty();
                    let value = if kind == ColumnKind::Boolean {
                        normalise_boolean(raw)
                    } else {
                        raw.to_string()
                    };
                    v.push(value);
                    missing[ci].push(is_missing);
                }
            }
        }
    }
    if seen_rows == 0 {
        return Err(Error::EmptyFile(Default::default()));
    }
    let table = Table::with_missing(schema.clone(), columns, missing, dropped)?;
    Ok((table, observed))
}

fn parse_label(raw: &str) -> Option<usize> {
    if let Ok(v) = raw.parse::<usize>() {
        return Some(v);
    }
    // Exports sometimes write integral labels as "2.0".
    match raw.parse::<f64>() {
        Ok(x) if x.fract() == 0.0 && x >= 0.0 && x < usize::MAX as f64 => Some(x as usize),
        _ => None,
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Fill missing numeric cells with the column median and missing
/// categorical cells with [`UNKNOWN_CATEGORY`].
pub fn impute(table: &Table) -> Result<Table> {
    let mut columns = Vec::with_capacity(table.columns.len());
    for ((spec, data), mask) in table
        .schema
        .columns
        .iter()
        .zip(&table.columns)
        .zip(&table.missing)
    {
        let filled = match data {
            ColumnData::Numeric(v) => {
                if !mask.iter().any(|&m| m) {
                    data.clone()
                } else {
                    let mut observed: Vec<f64> = v
                        .iter()
                        .zip(mask)
                        .filter(|(_, &m)| !m)
                        .map(|(&x, _)| x)
                        .collect();
                    let med = median(&mut observed)
                        .ok_or_else(|| Error::AllMissingColumn(spec.name.clone()))?;
                    ColumnData::Numeric(
                        v.iter()
                            .zip(mask)
                            .map(|(&x, &m)| if m { med } else { x })
                            .collect(),
                    )
                }
            }
            ColumnData::Categorical(v) => ColumnData::Categorical(
                v.iter()
                    .zip(mask)
                    .map(|(x, &m)| if m { UNKNOWN_CATEGORY.to_string() } else { x.clone() })
                    .collect(),
            ),
            ColumnData::Target(_) => data.clone(),
        };
        columns.push(filled);
    }
    Ok(Table {
        schema: table.schema.clone(),
        missing: columns.iter().map(|c| vec![false; c.len()]).collect(),
        columns,
        n_rows: table.n_rows,
        dropped_rows: table.dropped_rows,
    })
}

/// Fraction of rows in each class `1..=K` (index 0 is class 1).
pub fn class_distribution(table: &Table) -> Vec<f64> {
    let counts = class_counts(table.targets(), table.n_classes());
    let n = table.n_rows();
    if n == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Row count per class `1..=k`. Labels outside the range are ignored.
pub fn class_counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &l in labels {
        if (1..=k).contains(&l) {
            counts[l - 1] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    pub missing_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericSummary>,
    /// Up to ten most frequent categories, most frequent first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_categories: Option<Vec<(String, usize)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub dropped_rows: usize,
    pub class_counts: Vec<usize>,
    pub class_distribution: Vec<f64>,
    pub columns: Vec<ColumnSummary>,
}

/// Per-column summary: missing rate, and min/median/max or top-10 category
/// counts. Computed on the raw (pre-imputation) table.
pub fn summarize(table: &Table) -> DatasetSummary {
    let n = table.n_rows();
    let columns = table
        .schema
        .columns
        .iter()
        .zip(&table.columns)
        .zip(&table.missing)
        .map(|((spec, data), mask)| {
            let n_missing = mask.iter().filter(|&&m| m).count();
            let missing_rate = if n == 0 {
                0.0
            } else {
                n_missing as f64 / n as f64
            };
            let mut summary = ColumnSummary {
                name: spec.name.clone(),
                kind: spec.kind,
                missing_rate,
                numeric: None,
                top_categories: None,
            };
            match data {
                ColumnData::Numeric(v) => {
                    let mut observed: Vec<f64> = v
                        .iter()
                        .zip(mask)
                        .filter(|(_, &m)| !m)
                        .map(|(&x, _)| x)
                        .collect();
                    if let Some(med) = median(&mut observed) {
                        summary.numeric = Some(NumericSummary {
                            min: observed[0],
                            median: med,
                            max: observed[observed.len() - 1],
                        });
                    }
                }
                ColumnData::Categorical(v) => {
                    let labels = v
                        .iter()
                        .zip(mask)
                        .filter(|(_, &m)| !m)
                        .map(|(x, _)| x.clone());
                    summary.top_categories = Some(top_counts(labels, 10));
                }
                ColumnData::Target(v) => {
                    summary.top_categories =
                        Some(top_counts(v.iter().map(|l| l.to_string()), 10));
                }
            }
            summary
        })
        .collect();
    DatasetSummary {
        n_rows: n,
        dropped_rows: table.dropped_rows,
        class_counts: class_counts(table.targets(), table.n_classes()),
        class_distribution: class_distribution(table),
        columns,
    }
}

fn top_counts(values: impl Iterator<Item = String>, limit: usize) -> Vec<(String, usize)> {
    let mut order = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for v in values {
        let e = counts.entry(v.clone()).or_insert_with(|| {
            order.push(v);
            0
        });
        *e += 1;
    }
    // Stable sort keeps first-appearance order among equal counts.
    let mut ranked: Vec<(String, usize)> = order
        .into_iter()
        .map(|k| {
            let c = counts[&k];
            (k, c)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(limit);
    ranked
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub class_proportions: Vec<f64>,
    pub n_numeric: usize,
    pub n_categorical: usize,
    /// Scale of the per-class shift applied to feature distributions.
    pub class_shift: f64,
    #[serde(default = "default_categories")]
    pub categories_per_column: usize,
    pub seed: u64,
}

fn default_categories() -> usize {
    6
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.class_proportions;
        if p.len() < 2 {
            return Err(Error::InvalidProportions("need at least two classes".into()));
        }
        if p.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidProportions(
                "proportions must be strictly positive".into(),
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProportions(format!(
                "proportions sum to {sum}, expected 1"
            )));
        }
        if self.categories_per_column < 2 {
            return Err(Error::InvalidProportions(
                "categories_per_column must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn schema(&self) -> SchemaSpec {
        let mut columns = Vec::with_capacity(self.n_numeric + self.n_categorical + 1);
        for j in 0..self.n_numeric {
            columns.push(ColumnSpec::new(format!("num_{j}"), ColumnKind::Numeric));
        }
        for j in 0..self.n_categorical {
            columns.push(ColumnSpec::new(format!("cat_{j}"), ColumnKind::Categorical));
        }
        columns.push(ColumnSpec::new("Severity", ColumnKind::Target));
        SchemaSpec {
            columns,
            target_cardinality: self.class_proportions.len(),
        }
    }
}

/// Deterministic imbalanced dataset.
///
/// Class counts are the largest-remainder rounding of
/// `n_rows * class_proportions`; rows are then shuffled. Each class has its
/// own mean vector for the numeric features (drawn once, scaled by
/// `class_shift`) and its own preferred category per categorical column.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Table> {
    spec.validate()?;
    let k = spec.class_proportions.len();
    let mut rng = seed::rng(spec.seed);

    let counts = largest_remainder(spec.n_rows, &spec.class_proportions, 0);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat(c + 1).take(n))
        .collect();
    labels.shuffle(&mut rng);

    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..spec.n_numeric)
                .map(|_| spec.class_shift * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let m = spec.categories_per_column;
    let cat_samplers: Vec<Vec<WeightedIndex<f64>>> = (0..k)
        .map(|c| {
            (0..spec.n_categorical)
                .map(|j| {
                    let preferred = (c + j * 7 + rng.gen_range(0..m)) % m;
                    let weights: Vec<f64> = (0..m)
                        .map(|i| if i == preferred { 1.0 + 2.0 * spec.class_shift * m as f64 } else { 1.0 })
                        .collect();
                    WeightedIndex::new(weights).expect("positive weights")
                })
                .collect()
        })
        .collect();

    let mut columns = Vec::with_capacity(spec.n_numeric + spec.n_categorical + 1);
    for j in 0..spec.n_numeric {
        let v = labels
            .iter()
            .map(|&l| means[l - 1][j] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        columns.push(ColumnData::Numeric(v));
    }
    for j in 0..spec.n_categorical {
        let v = labels
            .iter()
            .map(|&l| format!("c{}", cat_samplers[l - 1][j].sample(&mut rng)))
            .collect();
        columns.push(ColumnData::Categorical(v));
    }
    columns.push(ColumnData::Target(labels));
    Table::from_columns(spec.schema(), columns)
}

/// Write a table as CSV with a header row, in schema order. Missing cells are
/// written as empty fields.
pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(table.schema.columns.iter().map(|c| c.name.as_str()))?;
    let mut record = Vec::with_capacity(table.columns.len());
    for r in 0..table.n_rows {
        record.clear();
        for (data, mask) in table.columns.iter().zip(&table.missing) {
            let cell = if mask[r] {
                String::new()
            } else {
                match data {
                    ColumnData::Numeric(v) => format!("{:?}", v[r]),
                    ColumnData::Categorical(v) => v[r].clone(),
                    ColumnData::Target(v) => v[r].to_string(),
                }
            };
            record.push(cell);
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
