use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use severity_core::neural::{
    backward, compare_gradients, forward, gradient_check, init_params, Activation, LayerSpec,
    LossTarget, Mode, NetworkSpec, Parameters,
};
use severity_core::seed;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

#[test]
fn linear_mse_gradient_is_exact() {
    let spec = NetworkSpec::new(vec![LayerSpec::dense(5, 3, Activation::Linear)], 0.0).unwrap();
    let params = init_params(&spec, 1);
    let x = random_matrix(8, 5, 2);
    let t = random_matrix(8, 3, 3);
    let report = gradient_check(&spec, &params, x.view(), &LossTarget::Mse(t.view()), 500, 4).unwrap();
    assert_eq!(report.coordinates_checked, params.len());
    assert!(report.max_relative_error < 1e-7, "{report:?}");
}

fn relu_classifier(l2: f64) -> NetworkSpec {
    NetworkSpec::new(
        vec![
            LayerSpec::dense(6, 10, Activation::Relu),
            LayerSpec::dense(10, 8, Activation::Relu),
            LayerSpec::dense(8, 4, Activation::Softmax),
        ],
        l2,
    )
    .unwrap()
}

#[test]
fn relu_classifier_weighted_ce() {
    let spec = relu_classifier(1e-3);
    let params = init_params(&spec, 5);
    let x = random_matrix(12, 6, 6);
    let labels: Vec<usize> = (0..12).map(|i| 1 + i % 4).collect();
    let weights = [75.9, 0.35, 0.92, 17.5];
    let target = LossTarget::WeightedCe {
        labels: &labels,
        weights: &weights,
    };
    let report = gradient_check(&spec, &params, x.view(), &target, 200, 7).unwrap();
    assert_eq!(report.coordinates_checked, params.len().min(200));
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

#[test]
fn corrupted_gradient_is_detected() {
    let spec = relu_classifier(0.0);
    let params = init_params(&spec, 8);
    let x = random_matrix(10, 6, 9);
    let labels: Vec<usize> = (0..10).map(|i| 1 + i % 4).collect();
    let target = LossTarget::WeightedCe {
        labels: &labels,
        weights: &[1.0; 4],
    };
    let (_, cache) = forward(&spec, &params, x.view(), Mode::Train, 0).unwrap();
    let mut grads = backward(&spec, &params, &cache, &target).unwrap();
    for l in &mut grads.layers {
        l.weights *= 1.01;
        l.bias *= 1.01;
    }
    let report = compare_gradients(&spec, &params, x.view(), &target, &grads, 300, 10).unwrap();
    assert!(report.max_relative_error > 1e-3, "{report:?}");
}

#[test]
fn dropout_masks_replayed_in_backward() {
    let spec = NetworkSpec::new(
        vec![
            LayerSpec::dense(4, 9, Activation::Relu),
            LayerSpec::dropout(0.4),
            LayerSpec::dense(9, 3, Activation::Softmax),
        ],
        1e-4,
    )
    .unwrap();
    let params = init_params(&spec, 11);
    let x = random_matrix(7, 4, 12);
    let labels = [1, 2, 3, 1, 2, 3, 3];
    let target = LossTarget::WeightedCe {
        labels: &labels,
        weights: &[2.0, 1.0, 0.5],
    };
    let report = gradient_check(&spec, &params, x.view(), &target, 200, 13).unwrap();
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let spec = NetworkSpec::new(
        vec![
            LayerSpec::dropout(0.3),
            LayerSpec::dense(3, 3, Activation::Linear),
        ],
        0.0,
    )
    .unwrap();
    let mut params = Parameters::zeros_like(&spec);
    params.layers[0].weights = Array2::eye(3);
    let input = ndarray::array![[1.0, -2.0, 0.5]];
    // 10^5 trials as one batch of identical rows
    let batch = Array2::from_shape_fn((100_000, 3), |(_, j)| input[[0, j]]);
    let (out, _) = forward(&spec, &params, batch.view(), Mode::Train, 77).unwrap();
    let mean = out.mean_axis(ndarray::Axis(0)).unwrap();
    for j in 0..3 {
        let rel = (mean[j] - input[[0, j]]).abs() / input[[0, j]].abs();
        assert!(rel < 0.01, "column {j}: mean {} vs {}", mean[j], input[[0, j]]);
    }
}

#[test]
fn training_step_is_deterministic() {
    use severity_core::neural::{adam_step, AdamState};
    let spec = NetworkSpec::new(
        vec![
            LayerSpec::dense(5, 16, Activation::Relu),
            LayerSpec::dropout(0.3),
            LayerSpec::dense(16, 4, Activation::Softmax),
        ],
        1e-3,
    )
    .unwrap();
    let x = random_matrix(32, 5, 20);
    let labels: Vec<usize> = (0..32).map(|i| 1 + (i * 7) % 4).collect();
    let run = || {
        let mut p = init_params(&spec, 21);
        let mut st = AdamState::new(&spec, 0.01);
        for step in 0..5 {
            let (_, cache) = forward(&spec, &p, x.view(), Mode::Train, 100 + step).unwrap();
            let target = LossTarget::WeightedCe {
                labels: &labels,
                weights: &[1.0, 2.0, 3.0, 4.0],
            };
            let g = backward(&spec, &p, &cache, &target).unwrap();
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        p.flat()
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn softmax_output_under_mse_uses_full_jacobian() {
    let spec = NetworkSpec::new(
        vec![
            LayerSpec::dense(3, 5, Activation::Relu),
            LayerSpec::dense(5, 4, Activation::Softmax),
        ],
        0.0,
    )
    .unwrap();
    let params = init_params(&spec, 30);
    let x = random_matrix(6, 3, 31);
    let t = random_matrix(6, 4, 32);
    let report = gradient_check(&spec, &params, x.view(), &LossTarget::Mse(t.view()), 200, 33).unwrap();
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}
