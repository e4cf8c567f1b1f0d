//! Pairwise association between columns via Cramér's V.
//!
//! Numeric columns are discretised with equal-frequency bins before the
//! contingency table is built, so every column pair (numeric or categorical)
//! is measured on the same scale.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnData, ColumnKind, Table};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// Equal-frequency binning.
///
/// Bin edges are the empirical quantiles `sorted[ceil(i*n/n_bins) - 1]` for
/// `i = 1..n_bins`. A value equal to an edge falls in the lower bin. Bins that
/// end up empty are collapsed so the returned indices are consecutive from 0.
/// A constant column maps to a single category.
pub fn bin_numeric(values: &[f64], n_bins: usize) -> Vec<usize> {
    assert!(n_bins >= 2, "n_bins must be at least 2");
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..n_bins)
        .map(|i| sorted[(i * n).div_ceil(n_bins) - 1])
        .collect();
    let raw: Vec<usize> = values
        .iter()
        .map(|x| edges.partition_point(|e| e < x))
        .collect();
    collapse(&raw, n_bins)
}

fn collapse(raw: &[usize], n_bins: usize) -> Vec<usize> {
    let mut used = vec![false; n_bins];
    for &b in raw {
        used[b] = true;
    }
    let mut remap = vec![0; n_bins];
    let mut next = 0;
    for (b, &u) in used.iter().enumerate() {
        if u {
            remap[b] = next;
            next += 1;
        }
    }
    raw.iter().map(|&b| remap[b]).collect()
}

/// Cross-tabulated counts of two categorical variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl ContingencyTable {
    /// Wrap a raw count matrix; labels default to the row/column index.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let r = counts.len();
        let c = counts.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || counts.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch(
                "contingency table must be a non-empty rectangle".into(),
            ));
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            row_labels: (0..r).map(|i| i.to_string()).collect(),
            col_labels: (0..c).map(|j| j.to_string()).collect(),
            counts,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn n_rows(&self) -> usize {
        self.counts.len()
    }

    pub fn n_cols(&self) -> usize {
        self.counts[0].len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Count co-occurrences. Labels appear in first-appearance order.
pub fn build_contingency<A, B>(a: &[A], b: &[B]) -> Result<ContingencyTable>
where
    A: Eq + Hash + ToString,
    B: Eq + Hash + ToString,
{
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (ai, row_labels) = index_labels(a);
    let (bi, col_labels) = index_labels(b);
    let mut counts = vec![vec![0u64; col_labels.len()]; row_labels.len()];
    for (&i, &j) in ai.iter().zip(&bi) {
        counts[i][j] += 1;
    }
    Ok(ContingencyTable {
        counts,
        row_labels,
        col_labels,
    })
}

fn index_labels<T: Eq + Hash + ToString>(values: &[T]) -> (Vec<usize>, Vec<String>) {
    let mut ids: HashMap<&T, usize> = HashMap::new();
    let mut labels = Vec::new();
    let idx = values
        .iter()
        .map(|v| {
            *ids.entry(v).or_insert_with(|| {
                labels.push(v.to_string());
                labels.len() - 1
            })
        })
        .collect();
    (idx, labels)
}

/// Pearson's χ² statistic against the independence expectation.
pub fn chi_square(t: &ContingencyTable) -> f64 {
    let n = t.total() as f64;
    let row_totals: Vec<f64> = t
        .counts
        .iter()
        .map(|r| r.iter().sum::<u64>() as f64)
        .collect();
    let col_totals: Vec<f64> = (0..t.n_cols())
        .map(|j| t.counts.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let mut chi2 = 0.0;
    for (row, &rt) in t.counts.iter().zip(&row_totals) {
        for (&obs, &ct) in row.iter().zip(&col_totals) {
            let expected = rt * ct / n;
            if expected > 0.0 {
                let d = obs as f64 - expected;
                chi2 += d * d / expected;
            }
        }
    }
    chi2
}

/// Cramér's V in `[0, 1]`.
///
/// The plain form is `sqrt(chi2 / (n * (min(r, c) - 1)))`. With
/// `bias_corrected` the small-sample correction is applied to both φ² and the
/// table dimensions. Tables with a single row or column give 0.
pub fn cramers_v(t: &ContingencyTable, bias_corrected: bool) -> f64 {
    let r = t.n_rows() as f64;
    let c = t.n_cols() as f64;
    if r.min(c) <= 1.0 {
        return 0.0;
    }
    let n = t.total() as f64;
    let chi2 = chi_square(t);
    let v = if bias_corrected {
        if n <= 1.0 {
            return 0.0;
        }
        let phi2 = (chi2 / n - (r - 1.0) * (c - 1.0) / (n - 1.0)).max(0.0);
        let r_corr = r - (r - 1.0).powi(2) / (n - 1.0);
        let c_corr = c - (c - 1.0).powi(2) / (n - 1.0);
        let denom = (r_corr - 1.0).min(c_corr - 1.0);
        if denom <= 0.0 {
            return 0.0;
        }
        (phi2 / denom).sqrt()
    } else {
        (chi2 / (n * (r.min(c) - 1.0))).sqrt()
    };
    v.clamp(0.0, 1.0)
}

/// Symmetric matrix of pairwise Cramér's V values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl AssociationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[i][j])
    }

    /// CSV with a header row of labels and one labelled row per column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Per-row category codes for a column; numeric columns are binned.
pub fn column_categories(data: &ColumnData, n_bins: usize) -> Vec<usize> {
    match data {
        ColumnData::Numeric(v) => bin_numeric(v, n_bins),
        ColumnData::Categorical(v) => index_labels(v).0,
        ColumnData::Target(v) => index_labels(v).0,
    }
}

/// Cramér's V for every pair of columns in an imputed table.
pub fn association_matrix(table: &Table, n_bins: usize, bias_corrected: bool) -> AssociationMatrix {
    let labels: Vec<String> = table
        .schema()
        .columns
        .iter()
        .map(|c| c.name.clone())
        .collect();
    let m = labels.len();
    let codes: Vec<Vec<usize>> = table
        .columns()
        .par_iter()
        .map(|c| column_categories(c, n_bins))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let pair_values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| pair_v(&codes[i], &codes[j], bias_corrected))
        .collect();
    let mut values = vec![vec![0.0; m]; m];
    for i in 0..m {
        values[i][i] = 1.0;
    }
    for (&(i, j), &v) in pairs.iter().zip(&pair_values) {
        values[i][j] = v;
        values[j][i] = v;
    }
    AssociationMatrix { labels, values }
}

fn pair_v(a: &[usize], b: &[usize], bias_corrected: bool) -> f64 {
    match build_contingency(a, b) {
        Ok(t) => cramers_v(&t, bias_corrected),
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub column: String,
    pub kind: ColumnKind,
    pub v: f64,
}

/// Features ranked by association with the target and the subset kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub threshold: f64,
    pub n_bins: usize,
    pub bias_corrected: bool,
    pub ranked: Vec<RankedFeature>,
    pub selected: Vec<String>,
}

/// Rank every non-target column by V against the target and keep those at or
/// above `threshold`. Ties keep schema order.
pub fn select_features(
    table: &Table,
    threshold: f64,
    n_bins: usize,
    bias_corrected: bool,
) -> SelectionReport {
    let schema = table.schema();
    let target_idx = schema.target_index();
    let target_codes = column_categories(&table.columns()[target_idx], n_bins);
    let mut ranked: Vec<RankedFeature> = schema
        .columns
        .par_iter()
        .zip(table.columns().par_iter())
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, (spec, data))| RankedFeature {
            column: spec.name.clone(),
            kind: spec.kind,
            v: pair_v(&column_categories(data, n_bins), &target_codes, bias_corrected),
        })
        .collect();
    ranked.sort_by(|a, b| b.v.total_cmp(&a.v));
    let selected = ranked
        .iter()
        .filter(|f| f.v >= threshold)
        .map(|f| f.column.clone())
        .collect();
    SelectionReport {
        threshold,
        n_bins,
        bias_corrected,
        ranked,
        selected,
    }
}
