//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 3 6`.
//! Criterion 10 needs the public US-Accidents CSV: set `US_ACCIDENTS_CSV`
//! to its path (and run with `--release`; it takes hours).

mod common;

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use common::{cramers_v_oracle, random_table, within_one_row};
use severity_core::association::{cramers_v, ContingencyTable};
use severity_core::dataset::{
    class_counts, generate_synthetic, impute, ingest_csv, ColumnData, SchemaSpec, SyntheticSpec,
    Table,
};
use severity_core::evaluation::{
    ber, classifier_runner, confusion, cross_validate, cv_folds, grid_search, CvResult, GridSpec,
};
use severity_core::models::{compute_class_weights, encode, train_autoencoder, AutoencoderConfig, ClassifierConfig};
use severity_core::neural::{gradient_check, init_params, Activation, LayerSpec, LossTarget, NetworkSpec};
use severity_core::preprocess::{stratified_split, FeatureMatrix, FeaturePipeline, DEFAULT_RATIOS};
use severity_core::seed;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn feature_columns(t: &Table) -> Vec<String> {
    let target = t.schema().target_name().to_string();
    t.schema()
        .columns
        .iter()
        .filter(|c| c.name != target)
        .map(|c| c.name.clone())
        .collect()
}

// 1 ---------------------------------------------------------------------------

fn class_weight_reproduction() -> Outcome {
    let proportions = [0.0033, 0.710, 0.272, 0.0143];
    let expected = [75.94, 0.35, 0.92, 17.49];
    let mut labels = Vec::new();
    for (c, p) in proportions.iter().enumerate() {
        let n = (p * 1e6_f64).round() as usize;
        labels.extend(std::iter::repeat_n(c + 1, n));
    }
    let w = compute_class_weights(&labels, 4).map_err(|e| e.to_string())?;
    let rel: Vec<f64> = w
        .weights
        .iter()
        .zip(expected)
        .map(|(g, e)| (g - e).abs() / e)
        .collect();
    let worst = rel.iter().copied().fold(0.0, f64::max);
    check(
        worst < 0.01,
        format!("weights {:.3?}, max relative deviation {:.4}", w.weights, worst),
    )
}

// 2 ---------------------------------------------------------------------------

fn cramers_v_oracle_equivalence() -> Outcome {
    let mut rng = seed::rng(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let t = random_table(&mut rng, 6, 10_000);
        let got = cramers_v(&ContingencyTable::from_counts(t.clone()).unwrap(), false);
        worst = worst.max((got - cramers_v_oracle(&t)).abs());
    }
    let mut perfect_err = 0.0f64;
    let mut independent_err = 0.0f64;
    for _ in 0..50 {
        let k = rng.gen_range(2..=6);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let mut t = vec![vec![0u64; k]; k];
        for (i, &j) in perm.iter().enumerate() {
            t[i][j] = rng.gen_range(1..2000);
        }
        let v = cramers_v(&ContingencyTable::from_counts(t).unwrap(), false);
        perfect_err = perfect_err.max((v - 1.0).abs());

        let r = rng.gen_range(2..=6);
        let c = rng.gen_range(2..=6);
        let a: Vec<u64> = (0..r).map(|_| rng.gen_range(1..20)).collect();
        let b: Vec<u64> = (0..c).map(|_| rng.gen_range(1..20)).collect();
        let t: Vec<Vec<u64>> = a.iter().map(|x| b.iter().map(|y| x * y).collect()).collect();
        let v = cramers_v(&ContingencyTable::from_counts(t).unwrap(), false);
        independent_err = independent_err.max(v.abs());
    }
    check(
        worst < 1e-10 && perfect_err <= 1e-12 && independent_err <= 1e-12,
        format!(
            "500 tables max |V - oracle| {worst:.2e}; perfect |V-1| {perfect_err:.2e}; independent |V| {independent_err:.2e}"
        ),
    )
}

// 3 ---------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let mut rng = seed::rng(3);
    let mut worst = 0.0f64;
    let mut summary = Vec::new();
    for case in 0..20usize {
        let n_dense = rng.gen_range(1..=4);
        let ce = case % 2 == 0;
        let mut widths = vec![rng.gen_range(2..=8)];
        for _ in 1..n_dense {
            widths.push(rng.gen_range(2..=12));
        }
        let k = rng.gen_range(2..=5);
        widths.push(k);
        let mut layers = Vec::new();
        for i in 0..n_dense {
            let last = i == n_dense - 1;
            let act = if last {
                if ce || rng.gen_bool(0.3) {
                    Activation::Softmax
                } else {
                    Activation::Linear
                }
            } else if rng.gen_bool(0.75) {
                Activation::Relu
            } else {
                Activation::Linear
            };
            layers.push(LayerSpec::dense(widths[i], widths[i + 1], act));
            if !last && rng.gen_bool(0.3) {
                // checked with rate 0 so the network is the plain function
                layers.push(LayerSpec::dropout(0.0));
            }
        }
        let l2 = [0.0, 1e-4, 1e-3][rng.gen_range(0..3)];
        let spec = NetworkSpec::new(layers, l2).map_err(|e| e.to_string())?;
        let mut params = init_params(&spec, rng.gen());
        // random biases keep zero-input units off the relu corner, where
        // the one-sided numeric slope is not a derivative
        for layer in &mut params.layers {
            layer.bias.mapv_inplace(|_| 0.1 * rng.sample::<f64, _>(StandardNormal));
        }
        let rows = rng.gen_range(4..=16);
        let x = Array2::from_shape_simple_fn((rows, widths[0]), || rng.sample(StandardNormal));
        let labels: Vec<usize> = (0..rows).map(|i| 1 + i % k).collect();
        let class_weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..80.0)).collect();
        let t = Array2::from_shape_simple_fn((rows, k), || rng.sample::<f64, _>(StandardNormal));
        let target = if ce {
            LossTarget::WeightedCe {
                labels: &labels,
                weights: &class_weights,
            }
        } else {
            LossTarget::Mse(t.view())
        };
        let report = gradient_check(&spec, &params, x.view(), &target, 200, rng.gen())
            .map_err(|e| e.to_string())?;
        worst = worst.max(report.max_relative_error);
        summary.push(format!("{}{}", n_dense, if ce { "c" } else { "m" }));
    }
    check(
        worst < 1e-5,
        format!("20 networks [{}], max relative error {worst:.2e}", summary.join(" ")),
    )
}

// 4 + 5 -----------------------------------------------------------------------

struct Ablation {
    weighted: CvResult,
    unweighted: CvResult,
}

fn ablation_run() -> Result<Ablation, String> {
    let spec = SyntheticSpec {
        n_rows: 20_000,
        class_proportions: vec![0.005, 0.70, 0.27, 0.025],
        n_numeric: 6,
        n_categorical: 3,
        class_shift: 0.3,
        categories_per_column: 6,
        seed: 2024,
    };
    let table = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let pipeline = FeaturePipeline::fit(&table, &feature_columns(&table)).map_err(|e| e.to_string())?;
    let (x, _) = pipeline.transform(&table).map_err(|e| e.to_string())?;
    let run = |use_class_weights: bool| {
        let cfg = ClassifierConfig {
            initial_neurons: 64,
            initial_dropout: 0.3,
            batch_size: 500,
            l2_penalty: 1e-4,
            epochs: 20,
            use_class_weights,
            learning_rate: 1e-3,
            seed: 1,
        };
        cross_validate(classifier_runner(&cfg, 4), x.view(), table.targets(), 4, 10, 99)
            .map_err(|e| e.to_string())
    };
    Ok(Ablation {
        weighted: run(true)?,
        unweighted: run(false)?,
    })
}

fn class_weight_ablation(a: &Ablation) -> Outcome {
    let gap = a.unweighted.mean_ber - a.weighted.mean_ber;
    let recall = |r: &CvResult| r.mean_per_class_recall[0].unwrap_or(0.0);
    let (rw, ru) = (recall(&a.weighted), recall(&a.unweighted));
    check(
        gap >= 0.10 && ru < 0.05 && rw > 0.30,
        format!(
            "BER weighted {:.4}±{:.4} vs unweighted {:.4}±{:.4} (gap {gap:.4}); class-1 recall {rw:.3} vs {ru:.3}",
            a.weighted.mean_ber, a.weighted.std_ber, a.unweighted.mean_ber, a.unweighted.std_ber
        ),
    )
}

fn accuracy_trade_off(a: &Ablation) -> Outcome {
    check(
        a.unweighted.mean_accuracy > a.weighted.mean_accuracy,
        format!(
            "accuracy unweighted {:.4} vs weighted {:.4}",
            a.unweighted.mean_accuracy, a.weighted.mean_accuracy
        ),
    )
}

// 6 ---------------------------------------------------------------------------

/// 8 latent factors pushed through a fixed nonlinear map into 64 columns,
/// then standardized.
fn intrinsic_dim_8(rows: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed);
    let z = Array2::from_shape_simple_fn((rows, 8), || rng.sample::<f64, _>(StandardNormal));
    let mut mix = seed::rng(606);
    let a = Array2::from_shape_simple_fn((8, 64), || mix.sample::<f64, _>(StandardNormal)) / 8f64.sqrt();
    let mut x = z.dot(&a).mapv(|v| v + 0.3 * v.tanh());
    x += &(Array2::from_shape_simple_fn((rows, 64), || rng.sample::<f64, _>(StandardNormal)) * 0.05);
    x
}

fn standardize(train: &mut Array2<f64>, other: &mut Array2<f64>) {
    for j in 0..train.ncols() {
        let col = train.column(j);
        let mean = col.mean().unwrap();
        let std = col.std(0.0);
        train.column_mut(j).mapv_inplace(|v| (v - mean) / std);
        other.column_mut(j).mapv_inplace(|v| (v - mean) / std);
    }
}

fn autoencoder_effectiveness() -> Outcome {
    let mut train = intrinsic_dim_8(3000, 61);
    let mut val = intrinsic_dim_8(1000, 62);
    standardize(&mut train, &mut val);
    let variance: f64 = val.var_axis(ndarray::Axis(0), 0.0).mean().unwrap();
    let train = FeatureMatrix::from_array(train);
    let val = FeatureMatrix::from_array(val);
    let cfg = AutoencoderConfig {
        encoder_widths: vec![32, 8],
        epochs: 100,
        batch_size: 100,
        seed: 6,
        ..AutoencoderConfig::new(64)
    };
    let (ae, history) = train_autoencoder(&cfg, &train, &val).map_err(|e| e.to_string())?;
    let mse = *history.val_loss.last().unwrap();
    let r2 = 1.0 - mse / variance;
    let width = encode(&ae, &val).map_err(|e| e.to_string())?.n_cols();
    check(
        r2 > 0.75 && width == 8,
        format!("val MSE {mse:.4} over variance {variance:.4}: R² {r2:.4}; latent width {width}"),
    )
}

// 7 ---------------------------------------------------------------------------

fn grid_completeness() -> Outcome {
    let spec = SyntheticSpec {
        n_rows: 5_000,
        class_proportions: vec![0.005, 0.70, 0.27, 0.025],
        n_numeric: 6,
        n_categorical: 3,
        class_shift: 0.3,
        categories_per_column: 6,
        seed: 7,
    };
    let table = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let cols = feature_columns(&table);
    let split = stratified_split(table.targets(), DEFAULT_RATIOS, 3).map_err(|e| e.to_string())?;
    let train = table.select_rows(&split.train);
    let val = table.select_rows(&split.val);
    let pipeline = FeaturePipeline::fit(&train, &cols).map_err(|e| e.to_string())?;
    let (tx, _) = pipeline.transform(&train).map_err(|e| e.to_string())?;
    let (vx, _) = pipeline.transform(&val).map_err(|e| e.to_string())?;
    // one epoch per cell keeps the full 54-cell sweep inside the time budget
    let base = ClassifierConfig {
        epochs: 1,
        ..ClassifierConfig::default()
    };
    let run = || {
        grid_search(&GridSpec::paper(), &base, tx.view(), train.targets(), vx.view(), val.targets(), 4, 5)
            .map_err(|e| e.to_string())
    };
    let first = run()?;
    let second = run()?;
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    first.write_csv(&mut csv_a).map_err(|e| e.to_string())?;
    second.write_csv(&mut csv_b).map_err(|e| e.to_string())?;
    let best = first.best().unwrap();
    check(
        first.cells.len() == 54 && first == second && csv_a == csv_b,
        format!(
            "{} rows, rerun identical: {}; best neurons {} dropout {} batch {} l2 {} (val BER {:.4})",
            first.cells.len(),
            first == second,
            best.config.initial_neurons,
            best.config.initial_dropout,
            best.config.batch_size,
            best.config.l2_penalty,
            best.metrics.ber
        ),
    )
}

// 8 ---------------------------------------------------------------------------

fn split_stratification() -> Outcome {
    let mut rng = seed::rng(8);
    let mut failures = Vec::new();
    for trial in 0..100 {
        let k_classes = rng.gen_range(2..=6);
        let n = rng.gen_range(20..3000);
        let skew: Vec<f64> = (0..k_classes).map(|_| rng.gen::<f64>().powi(3) + 0.01).collect();
        let total: f64 = skew.iter().sum();
        let labels: Vec<usize> = (0..n)
            .map(|_| {
                let mut u = rng.gen::<f64>() * total;
                for (c, &w) in skew.iter().enumerate() {
                    if u < w {
                        return c + 1;
                    }
                    u -= w;
                }
                k_classes
            })
            .collect();
        let counts = class_counts(&labels, k_classes);
        let split = stratified_split(&labels, DEFAULT_RATIOS, rng.gen()).map_err(|e| e.to_string())?;
        let parts = [(&split.train, 0.6), (&split.val, 0.2), (&split.test, 0.2)];
        let folds = cv_folds(&labels, 10, rng.gen());
        let fold_parts: Vec<(&Vec<usize>, f64)> = folds.iter().map(|f| (f, 0.1)).collect();
        for (name, group) in [("split", parts.to_vec()), ("folds", fold_parts)] {
            let mut all: Vec<usize> = group.iter().flat_map(|(p, _)| p.iter().copied()).collect();
            all.sort_unstable();
            if all != (0..n).collect::<Vec<_>>() {
                failures.push(format!("trial {trial} {name}: not a partition"));
            }
            for (part, share) in &group {
                let got = class_counts(&part.iter().map(|&i| labels[i]).collect::<Vec<_>>(), k_classes);
                for c in 0..k_classes {
                    if !within_one_row(counts[c], *share, got[c]) {
                        failures.push(format!(
                            "trial {trial} {name}: class {} has {} of {}",
                            c + 1,
                            got[c],
                            counts[c]
                        ));
                    }
                }
            }
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "100 label vectors: splits and 10 folds partition the rows, every class within 1 row".into()
        } else {
            failures[..failures.len().min(5)].join("; ")
        },
    )
}

// 9 ---------------------------------------------------------------------------

fn metric_identities() -> Outcome {
    let mut rng = seed::rng(9);
    let mut problems = Vec::new();
    for _ in 0..200 {
        let k = rng.gen_range(2..=6);
        let n = rng.gen_range(k..2000);
        let mut labels: Vec<usize> = (1..=k).collect();
        labels.extend((k..n).map(|_| rng.gen_range(1..=k)));
        let preds: Vec<usize> = labels
            .iter()
            .map(|&l| if rng.gen_bool(0.6) { l } else { rng.gen_range(1..=k) })
            .collect();
        let m = confusion(&preds, &labels, k).map_err(|e| e.to_string())?;
        let hits = preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
        if m.accuracy() != hits as f64 / n as f64 || m.trace() != hits as u64 {
            problems.push("accuracy != direct count".to_string());
        }
        let perfect = confusion(&labels, &labels, k).map_err(|e| e.to_string())?;
        if ber(&perfect).map_err(|e| e.to_string())?.ber != 0.0 {
            problems.push("perfect predictor BER != 0".into());
        }
        let constant = vec![rng.gen_range(1..=k); n];
        let c = confusion(&constant, &labels, k).map_err(|e| e.to_string())?;
        let b = ber(&c).map_err(|e| e.to_string())?.ber;
        if (b - (k as f64 - 1.0) / k as f64).abs() > 1e-12 {
            problems.push(format!("constant predictor BER {b} for K={k}"));
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "200 matrices: accuracy exact, perfect BER 0, constant BER (K-1)/K".into()
        } else {
            problems[..problems.len().min(5)].join("; ")
        },
    )
}

// 10 --------------------------------------------------------------------------

fn full_data_track(csv: &str) -> Outcome {
    let schema_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/us_accidents_texas.json");
    let schema = SchemaSpec::from_json_file(schema_path.as_ref()).map_err(|e| e.to_string())?;
    let table = ingest_csv(csv.as_ref(), &schema).map_err(|e| e.to_string())?;
    let texas: Vec<usize> = match table.column("State") {
        Some(ColumnData::Categorical(states)) => {
            (0..states.len()).filter(|&i| states[i] == "TX").collect()
        }
        _ => return Err("schema has no State column".into()),
    };
    let table = impute(&table.select_rows(&texas)).map_err(|e| e.to_string())?;
    let cols: Vec<String> = feature_columns(&table).into_iter().filter(|c| c != "State").collect();
    let pipeline = FeaturePipeline::fit(&table, &cols).map_err(|e| e.to_string())?;
    let (x, _) = pipeline.transform(&table).map_err(|e| e.to_string())?;
    let cv = cross_validate(
        classifier_runner(&ClassifierConfig::default(), 4),
        x.view(),
        table.targets(),
        4,
        10,
        10,
    )
    .map_err(|e| e.to_string())?;
    check(
        cv.mean_ber < 0.50,
        format!(
            "{} Texas rows, feature width {} (reference 1218), weighted DNN BER {:.4}±{:.4}",
            table.n_rows(),
            x.n_cols(),
            cv.mean_ber,
            cv.std_ber
        ),
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut failed = 0;
    let mut report = |n: u32, name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    };

    let simple: [(u32, &str, fn() -> Outcome); 4] = [
        (1, "class-weight reproduction", class_weight_reproduction),
        (2, "Cramér's V oracle equivalence", cramers_v_oracle_equivalence),
        (3, "gradient correctness", gradient_correctness),
        (6, "autoencoder effectiveness", autoencoder_effectiveness),
    ];
    for (n, name, f) in simple.into_iter().take(3) {
        if run(n) {
            let t = Instant::now();
            report(n, name, t, f());
        }
    }
    if run(4) || run(5) {
        let t = Instant::now();
        match ablation_run() {
            Ok(a) => {
                if run(4) {
                    report(4, "class-weight ablation direction", t, class_weight_ablation(&a));
                }
                if run(5) {
                    report(5, "accuracy/BER trade-off direction", t, accuracy_trade_off(&a));
                }
            }
            Err(e) => {
                for n in [4, 5] {
                    if run(n) {
                        report(n, "class-weight ablation", t, Err(e.clone()));
                    }
                }
            }
        }
    }
    let (n, name, f) = simple[3];
    if run(n) {
        let t = Instant::now();
        report(n, name, t, f());
    }
    let rest: [(u32, &str, fn() -> Outcome); 3] = [
        (7, "grid completeness", grid_completeness),
        (8, "split and CV stratification", split_stratification),
        (9, "metric identities", metric_identities),
    ];
    for (n, name, f) in rest {
        if run(n) {
            let t = Instant::now();
            report(n, name, t, f());
        }
    }
    if run(10) {
        match std::env::var("US_ACCIDENTS_CSV") {
            Ok(path) => {
                let t = Instant::now();
                report(10, "full-data track", t, full_data_track(&path));
            }
            Err(_) => println!("criterion 10 SKIP  full-data track: set US_ACCIDENTS_CSV to run"),
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
