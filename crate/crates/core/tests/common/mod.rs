//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Pearson chi-square by direct per-cell summation.
pub fn chi_square_oracle(counts: &[Vec<u64>]) -> f64 {
    let n: f64 = counts.iter().flatten().map(|&x| x as f64).sum();
    let mut chi2 = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let row_sum: f64 = counts[i].iter().map(|&x| x as f64).sum();
            let col_sum: f64 = counts.iter().map(|r| r[j] as f64).sum();
            let expected = row_sum * col_sum / n;
            if expected > 0.0 {
                chi2 += (obs as f64 - expected).powi(2) / expected;
            }
        }
    }
    chi2
}

/// Plain Cramér's V from the oracle chi-square. Empty rows/columns are
/// dropped first, since they carry no category.
pub fn cramers_v_oracle(counts: &[Vec<u64>]) -> f64 {
    let rows: Vec<Vec<u64>> = counts
        .iter()
        .filter(|r| r.iter().sum::<u64>() > 0)
        .cloned()
        .collect();
    let keep: Vec<usize> = (0..rows[0].len())
        .filter(|&j| rows.iter().map(|r| r[j]).sum::<u64>() > 0)
        .collect();
    let t: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    let m = t.len().min(keep.len());
    if m <= 1 {
        return 0.0;
    }
    let n: f64 = t.iter().flatten().map(|&x| x as f64).sum();
    (chi_square_oracle(&t) / (n * (m as f64 - 1.0))).sqrt()
}

/// Random r x c count table with every row and column non-empty.
pub fn random_table(rng: &mut ChaCha8Rng, max_dim: usize, max_total: u64) -> Vec<Vec<u64>> {
    loop {
        let r = rng.gen_range(1..=max_dim);
        let c = rng.gen_range(1..=max_dim);
        let total = rng.gen_range(1..=max_total);
        let mut t = vec![vec![0u64; c]; r];
        // skewed cell probabilities so tables are not all near-independent
        let w: Vec<f64> = (0..r * c).map(|_| rng.gen::<f64>().powi(3)).collect();
        let sum: f64 = w.iter().sum();
        for _ in 0..total {
            let mut u = rng.gen::<f64>() * sum;
            let mut cell = r * c - 1;
            for (k, &wk) in w.iter().enumerate() {
                if u < wk {
                    cell = k;
                    break;
                }
                u -= wk;
            }
            t[cell / c][cell % c] += 1;
        }
        let rows_ok = t.iter().all(|row| row.iter().sum::<u64>() > 0);
        let cols_ok = (0..c).all(|j| t.iter().map(|row| row[j]).sum::<u64>() > 0);
        if rows_ok && cols_ok {
            return t;
        }
    }
}

/// Expected per-part count `n_c * share` and whether `got` is within one row.
pub fn within_one_row(n_c: usize, share: f64, got: usize) -> bool {
    (got as f64 - n_c as f64 * share).abs() <= 1.0 + 1e-9
}
