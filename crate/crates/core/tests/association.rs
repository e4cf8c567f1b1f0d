mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{chi_square_oracle, cramers_v_oracle, random_table};
use severity_core::association::{
    association_matrix, bin_numeric, build_contingency, chi_square, cramers_v, select_features,
    ContingencyTable, DEFAULT_BINS,
};
use severity_core::dataset::{ColumnData, ColumnKind, ColumnSpec, SchemaSpec, Table};
use severity_core::seed;

fn table(counts: &[Vec<u64>]) -> ContingencyTable {
    ContingencyTable::from_counts(counts.to_vec()).unwrap()
}

fn arb_table() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2usize..6, 2usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(1u64..200, c), r)
    })
}

proptest! {
    #[test]
    fn v_invariant_under_permutation_and_transpose(t in arb_table(), s in any::<u64>()) {
        let v = cramers_v(&table(&t), false);
        let mut rng = seed::rng(s);
        let mut rows = t.clone();
        rows.shuffle(&mut rng);
        let mut perm: Vec<usize> = (0..t[0].len()).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<Vec<u64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        let transposed: Vec<Vec<u64>> = (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).collect()).collect();
        prop_assert!((cramers_v(&table(&permuted), false) - v).abs() < 1e-12);
        prop_assert!((cramers_v(&table(&transposed), false) - v).abs() < 1e-12);
    }

    #[test]
    fn v_invariant_under_count_scaling(t in arb_table(), k in 2u64..50) {
        let scaled: Vec<Vec<u64>> = t.iter().map(|r| r.iter().map(|x| x * k).collect()).collect();
        let a = cramers_v(&table(&t), false);
        let b = cramers_v(&table(&scaled), false);
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn v_in_unit_interval(t in arb_table()) {
        let tb = table(&t);
        for bias in [false, true] {
            let v = cramers_v(&tb, bias);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn chi_square_matches_oracle(t in arb_table()) {
        let a = chi_square(&table(&t));
        let b = chi_square_oracle(&t);
        prop_assert!((a - b).abs() <= 1e-10 * b.max(1.0));
    }
}

#[test]
fn v_zero_iff_chi_square_zero() {
    let independent = vec![vec![2, 4, 6], vec![3, 6, 9]];
    let t = table(&independent);
    assert!(chi_square(&t).abs() < 1e-12);
    assert!(cramers_v(&t, false).abs() < 1e-12);
    let dependent = vec![vec![2, 4, 6], vec![3, 6, 10]];
    let t = table(&dependent);
    assert!(chi_square(&t) > 0.0);
    assert!(cramers_v(&t, false) > 0.0);
}

#[test]
fn random_tables_match_brute_force() {
    let mut rng = seed::rng(404);
    for _ in 0..100 {
        let t = random_table(&mut rng, 6, 10_000);
        let got = cramers_v(&table(&t), false);
        let want = cramers_v_oracle(&t);
        assert!((got - want).abs() < 1e-10, "{t:?}: {got} vs {want}");
    }
}

#[test]
fn contingency_conserves_rows() {
    let mut rng = seed::rng(5);
    let a: Vec<u8> = (0..1000).map(|_| rng.gen_range(0..4)).collect();
    let b: Vec<u8> = (0..1000).map(|_| rng.gen_range(0..7)).collect();
    assert_eq!(build_contingency(&a, &b).unwrap().total(), 1000);
}

fn two_column_table(x: ColumnData, x_kind: ColumnKind, y: ColumnData, y_kind: ColumnKind, target: Vec<usize>) -> Table {
    let schema = SchemaSpec::new(
        vec![
            ColumnSpec::new("x", x_kind),
            ColumnSpec::new("y", y_kind),
            ColumnSpec::new("Severity", ColumnKind::Target),
        ],
        4,
    )
    .unwrap();
    Table::from_columns(schema, vec![x, y, ColumnData::Target(target)]).unwrap()
}

#[test]
fn independent_columns_have_small_v() {
    let n = 100_000;
    let mut rng = seed::rng(17);
    let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let y: Vec<String> = (0..n).map(|_| rng.gen_range(0..5).to_string()).collect();
    let target: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let t = two_column_table(
        ColumnData::Numeric(x),
        ColumnKind::Numeric,
        ColumnData::Categorical(y),
        ColumnKind::Categorical,
        target,
    );
    let m = association_matrix(&t, DEFAULT_BINS, false);
    assert!(m.get("x", "y").unwrap() < 0.05);
    assert!(m.get("x", "Severity").unwrap() < 0.05);
}

#[test]
fn matrix_is_symmetric_and_matches_pairwise_calls() {
    let mut rng = seed::rng(3);
    let n = 500;
    let target: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let y: Vec<String> = target
        .iter()
        .map(|&t| if rng.gen_bool(0.7) { t.to_string() } else { "z".into() })
        .collect();
    let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let t = two_column_table(
        ColumnData::Numeric(x.clone()),
        ColumnKind::Numeric,
        ColumnData::Categorical(y.clone()),
        ColumnKind::Categorical,
        target.clone(),
    );
    let m = association_matrix(&t, 10, false);
    for i in 0..3 {
        assert_eq!(m.values[i][i], 1.0);
        for j in 0..3 {
            assert_eq!(m.values[i][j], m.values[j][i]);
        }
    }
    let direct = cramers_v(&build_contingency(&y, &target).unwrap(), false);
    assert_eq!(m.get("y", "Severity").unwrap(), direct);
    let binned = bin_numeric(&x, 10);
    let direct = cramers_v(&build_contingency(&binned, &y).unwrap(), false);
    assert_eq!(m.get("x", "y").unwrap(), direct);
}

#[test]
fn duplicated_column_has_unit_association() {
    let vals: Vec<String> = (0..60).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
    let target: Vec<usize> = (0..60).map(|i| 1 + (i * 7) % 4).collect();
    let t = two_column_table(
        ColumnData::Categorical(vals.clone()),
        ColumnKind::Categorical,
        ColumnData::Categorical(vals),
        ColumnKind::Categorical,
        target,
    );
    let m = association_matrix(&t, DEFAULT_BINS, false);
    assert!((m.get("x", "y").unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn only_target_determined_column_is_selected() {
    let n = 2000;
    let mut rng = seed::rng(21);
    let target: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let determined: Vec<String> = target.iter().map(|t| format!("level{t}")).collect();
    let noise: Vec<String> = (0..n).map(|_| rng.gen_range(0..4).to_string()).collect();
    let t = two_column_table(
        ColumnData::Categorical(determined),
        ColumnKind::Categorical,
        ColumnData::Categorical(noise),
        ColumnKind::Categorical,
        target,
    );
    let report = select_features(&t, 0.2, DEFAULT_BINS, false);
    assert_eq!(report.selected, vec!["x".to_string()]);
    assert!((report.ranked[0].v - 1.0).abs() < 1e-12);
    assert!(report.ranked[1].v < 0.1);

    let all = select_features(&t, 0.0, DEFAULT_BINS, false);
    assert_eq!(all.selected.len(), 2);
}
