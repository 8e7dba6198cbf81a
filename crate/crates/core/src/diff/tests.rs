use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::hash::rng;
use crate::tensor::{ParamSet, Tensor};

fn linear_identity() -> Model {
    let params = ParamSet::from_entries(vec![
        (
            "l0.weight".into(),
            Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        ),
        ("l0.bias".into(), Tensor::from_vec(vec![0.0, 0.0])),
    ])
    .unwrap();
    Model::new(vec![2], vec![Layer::Dense { inputs: 2, outputs: 2 }], params).unwrap()
}

fn batch(rows: &[&[f64]]) -> Tensor {
    let n = rows[0].len();
    Tensor::new(vec![rows.len(), n], rows.concat()).unwrap()
}

fn mlp_layers(dims: &[usize]) -> Vec<Layer> {
    let mut layers = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        if i > 0 {
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Dense {
            inputs: w[0],
            outputs: w[1],
        });
    }
    layers
}

fn tiny_cnn_layers() -> Vec<Layer> {
    vec![
        Layer::Conv3x3 {
            in_channels: 1,
            out_channels: 2,
            height: 4,
            width: 4,
        },
        Layer::Relu,
        Layer::AvgPool2 {
            channels: 2,
            height: 4,
            width: 4,
        },
        Layer::Conv3x3 {
            in_channels: 2,
            out_channels: 2,
            height: 2,
            width: 2,
        },
        Layer::Relu,
        Layer::Flatten,
        Layer::Dense { inputs: 8, outputs: 3 },
    ]
}

fn random_model(input_shape: Vec<usize>, layers: Vec<Layer>, seed: u64) -> Model {
    let zero = Model::zeroed(input_shape, layers).unwrap();
    let mut r = rng(seed);
    let data = (0..zero.params().total_dim())
        .map(|_| r.random_range(-0.8..0.8))
        .collect();
    zero.with_params(ParamSet::from_flat(zero.params().layout().clone(), data).unwrap())
        .unwrap()
}

fn random_input(shape: &[usize], batch: usize, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n: usize = shape.iter().product::<usize>() * batch;
    let mut full = vec![batch];
    full.extend_from_slice(shape);
    Tensor::new(full, (0..n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    let diff = (a - b).abs();
    diff <= 1e-7 || diff / a.abs().max(b.abs()) <= 1e-4
}

#[test]
fn identity_forward() {
    let logits = linear_identity().forward(&batch(&[&[0.3, 0.7]])).unwrap();
    assert_eq!(logits.data(), &[0.3, 0.7]);
    assert_eq!(logits.shape(), &[1, 2]);
}

#[test]
fn zero_parameters_give_zero_logits() {
    let m = Model::zeroed(vec![3], mlp_layers(&[3, 5, 4])).unwrap();
    let logits = m.forward(&batch(&[&[0.2, -4.0, 9.0], &[1.0, 1.0, 1.0]])).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn two_layer_mlp_hand_forward() {
    // h = relu(W1 x + b1) = relu([1.1, -1.0, 0.3]) = [1.1, 0, 0.3]
    // z = W2 h + b2 = [1.1 - 0.3, 0.55 + 0.6 + 0.1] = [0.8, 1.25]
    let params = ParamSet::from_entries(vec![
        (
            "l0.weight".into(),
            Tensor::new(vec![3, 2], vec![1.0, 2.0, -1.0, 1.0, 0.5, -0.5]).unwrap(),
        ),
        ("l0.bias".into(), Tensor::from_vec(vec![0.1, 0.0, -0.2])),
        (
            "l2.weight".into(),
            Tensor::new(vec![2, 3], vec![1.0, 0.0, -1.0, 0.5, 1.0, 2.0]).unwrap(),
        ),
        ("l2.bias".into(), Tensor::from_vec(vec![0.0, 0.1])),
    ])
    .unwrap();
    let m = Model::new(vec![2], mlp_layers(&[2, 3, 2]), params).unwrap();
    let z = m.forward(&batch(&[&[1.0, 0.0]])).unwrap();
    assert!((z.data()[0] - 0.8).abs() < 1e-12);
    assert!((z.data()[1] - 1.25).abs() < 1e-12);
}

#[test]
fn forward_shape_mismatch_names_both_shapes() {
    let err = linear_identity().forward(&batch(&[&[0.3, 0.7, 1.0]])).unwrap_err();
    match err {
        crate::Error::Shape { expected, actual } => {
            assert_eq!(expected, vec![1, 2]);
            assert_eq!(actual, vec![1, 3]);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn non_finite_activation_names_the_layer() {
    let m = linear_identity();
    let err = m.forward(&batch(&[&[f64::NAN, 0.0]])).unwrap_err();
    assert!(err.to_string().contains("layer 0"), "{err}");
}

#[test]
fn linear_grad_dual_hand_chain_rule() {
    // p = (0.5, 0.5); dlogits = p - onehot(0) = (-0.5, 0.5); dW = dlogits ⊗ x = 0.
    let g = linear_identity().grad_dual(&batch(&[&[0.0, 0.0]]), &[0]).unwrap();
    assert_eq!(g.wrt_input.data(), &[-0.5, 0.5]);
    assert_eq!(g.wrt_params.get("l0.bias").unwrap().data(), &[-0.5, 0.5]);
    assert!(g.wrt_params.get("l0.weight").unwrap().data().iter().all(|&v| v == 0.0));
    assert!((g.loss_value - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn saturated_softmax_has_vanishing_gradients() {
    let params = ParamSet::from_entries(vec![
        (
            "l0.weight".into(),
            Tensor::new(vec![2, 2], vec![30.0, 0.0, 0.0, 1.0]).unwrap(),
        ),
        ("l0.bias".into(), Tensor::from_vec(vec![0.0, 0.0])),
    ])
    .unwrap();
    let m = Model::new(vec![2], vec![Layer::Dense { inputs: 2, outputs: 2 }], params).unwrap();
    let x = batch(&[&[1.0, 0.5]]);
    let logits = m.forward(&x).unwrap();
    assert!(logits.data()[0] - logits.data()[1] >= 20.0);
    let g = m.grad_dual(&x, &[0]).unwrap();
    assert!(g.wrt_input.l2_norm() <= 1e-6);
    assert!(g.wrt_params.l2_norm() <= 1e-6);
}

#[test]
fn grad_dual_matches_finite_differences() {
    let cases: Vec<(Vec<usize>, Vec<Layer>)> = vec![
        (vec![5], mlp_layers(&[5, 6, 4])),
        (vec![6], mlp_layers(&[6, 5, 4, 3])),
        (vec![1, 4, 4], tiny_cnn_layers()),
        (
            vec![4],
            vec![
                Layer::Linear { inputs: 4, outputs: 5 },
                Layer::Relu,
                Layer::Dense { inputs: 5, outputs: 3 },
            ],
        ),
    ];
    for (ci, (shape, layers)) in cases.into_iter().enumerate() {
        for probe in 0..6u64 {
            let seed = 100 * ci as u64 + probe;
            let m = random_model(shape.clone(), layers.clone(), seed);
            let x = random_input(&shape, 2, seed + 17);
            let labels = [(seed % 3) as usize, ((seed + 1) % 3) as usize];
            let g = m.grad_dual(&x, &labels).unwrap();
            let (fx, fp) = fd_gradient(&m, &x, &labels, DEFAULT_FD_STEP).unwrap();
            for (a, b) in g.wrt_input.data().iter().zip(fx.data()) {
                assert!(close(*a, *b), "case {ci} probe {probe}: input {a} vs {b}");
            }
            for (a, b) in g.wrt_params.flat().iter().zip(fp.flat()) {
                assert!(close(*a, *b), "case {ci} probe {probe}: param {a} vs {b}");
            }
        }
    }
}

#[test]
fn linear_layer_has_no_bias() {
    let m = Model::zeroed(vec![3], vec![Layer::Linear { inputs: 3, outputs: 2 }]).unwrap();
    assert_eq!(m.params().total_dim(), 6);
    assert!(m.params().get("l0.bias").is_none());
    let w = ParamSet::from_entries(vec![("l0.weight".into(), Tensor::new(vec![1, 1], vec![1.5]).unwrap())]).unwrap();
    let m = Model::new(vec![1], vec![Layer::Linear { inputs: 1, outputs: 1 }], w).unwrap();
    assert_eq!(m.forward(&batch(&[&[2.0]])).unwrap().data(), &[3.0]);
}

#[test]
fn fd_matches_linear_hand_gradient() {
    let (gx, _) = fd_gradient(&linear_identity(), &batch(&[&[0.0, 0.0]]), &[0], DEFAULT_FD_STEP).unwrap();
    assert!((gx.data()[0] + 0.5).abs() < 1e-6);
    assert!((gx.data()[1] - 0.5).abs() < 1e-6);
}

#[test]
fn fd_input_gradient_of_constant_model_is_zero() {
    let m = random_model(vec![3], mlp_layers(&[3, 4, 2]), 5);
    let mut params = m.params().clone();
    let w0 = params.layout().get("l0.weight").unwrap().range();
    params.flat_mut()[w0].fill(0.0);
    let m = m.with_params(params).unwrap();
    let (gx, _) = fd_gradient(&m, &random_input(&[3], 1, 9), &[1], DEFAULT_FD_STEP).unwrap();
    assert!(gx.data().iter().all(|v| v.abs() <= 1e-9));
}

#[test]
fn loss_value_matches_standalone_cross_entropy() {
    let m = random_model(vec![1, 4, 4], tiny_cnn_layers(), 3);
    let x = random_input(&[1, 4, 4], 5, 4);
    let labels = [0, 1, 2, 1, 0];
    let g = m.grad_dual(&x, &labels).unwrap();
    let ce = cross_entropy(&m.forward(&x).unwrap(), &labels).unwrap();
    assert!((g.loss_value - ce).abs() <= 1e-12);
}

#[test]
fn per_sample_input_grad_is_batch_times_mean_grad() {
    let m = random_model(vec![5], mlp_layers(&[5, 6, 4]), 8);
    let x = random_input(&[5], 4, 2);
    let labels = [3, 0, 1, 2];
    let (per, losses) = m.input_grad_per_sample(&x, &labels).unwrap();
    let dual = m.grad_dual(&x, &labels).unwrap();
    for (a, b) in per.data().iter().zip(dual.wrt_input.data()) {
        assert!((a / 4.0 - b).abs() < 1e-15);
    }
    assert!((losses.iter().sum::<f64>() / 4.0 - dual.loss_value).abs() < 1e-12);
}

#[test]
fn vjp_with_softmax_cotangent_reproduces_grad_dual() {
    let m = random_model(vec![1, 4, 4], tiny_cnn_layers(), 12);
    let x = random_input(&[1, 4, 4], 3, 13);
    let labels = [2, 0, 1];
    let logits = m.forward(&x).unwrap();
    let mut cot = Vec::new();
    for (row, &y) in logits.rows().zip(&labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|z| (z - max).exp()).sum();
        for (k, z) in row.iter().enumerate() {
            let p = (z - max).exp() / s;
            cot.push((p - if k == y { 1.0 } else { 0.0 }) / 3.0);
        }
    }
    let (gx, gp) = m.vjp(&x, &Tensor::new(vec![3, 3], cot).unwrap()).unwrap();
    let dual = m.grad_dual(&x, &labels).unwrap();
    for (a, b) in gx.data().iter().zip(dual.wrt_input.data()) {
        assert!((a - b).abs() < 1e-14);
    }
    for (a, b) in gp.flat().iter().zip(dual.wrt_params.flat()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn perturb_examples() {
    let m = random_model(vec![5], mlp_layers(&[5, 6, 4]), 21);
    let x = random_input(&[5], 3, 22);
    let base = m.forward(&x).unwrap();

    let eta = random_model(vec![5], mlp_layers(&[5, 6, 4]), 23).params().clone();
    assert_eq!(m.perturb_params(&eta, 0.0).unwrap().forward(&x).unwrap(), base);

    let mut neg = m.params().clone();
    neg.scale(-1.0);
    let zeroed = m.perturb_params(&neg, 1.0).unwrap();
    assert!(zeroed.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));

    let mut half = eta.clone();
    half.scale(0.5);
    let twice = m
        .perturb_params(&half, 1.0)
        .unwrap()
        .perturb_params(&half, 1.0)
        .unwrap();
    let once = m.perturb_params(&eta, 1.0).unwrap();
    for (a, b) in twice.params().flat().iter().zip(once.params().flat()) {
        assert!((a - b).abs() <= 1e-12);
    }
    // original untouched
    assert_eq!(m.forward(&x).unwrap(), base);
}

#[test]
fn perturb_rejects_foreign_layout() {
    let m = random_model(vec![5], mlp_layers(&[5, 6, 4]), 1);
    let other = random_model(vec![5], mlp_layers(&[5, 3, 4]), 1);
    assert!(m.perturb_params(other.params(), 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn perturbation_is_linear(seed in 0u64..1000, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let m = random_model(vec![5], mlp_layers(&[5, 6, 4]), seed);
        let eta = random_model(vec![5], mlp_layers(&[5, 6, 4]), seed + 1).params().clone();
        let x = random_input(&[5], 2, seed + 2);
        let joint = m.perturb_params(&eta, a + b).unwrap().forward(&x).unwrap();
        let split = m
            .perturb_params(&eta, a).unwrap()
            .perturb_params(&eta, b).unwrap()
            .forward(&x).unwrap();
        for (p, q) in joint.data().iter().zip(split.data()) {
            prop_assert!((p - q).abs() <= 1e-10);
        }
    }

    #[test]
    fn gradients_are_deterministic(seed in 0u64..1000) {
        let m = random_model(vec![1, 4, 4], tiny_cnn_layers(), seed);
        let x = random_input(&[1, 4, 4], 9, seed + 3);
        let labels: Vec<usize> = (0..9).map(|i| (i + seed as usize) % 3).collect();
        let a = m.grad_dual(&x, &labels).unwrap();
        let b = m.grad_dual(&x, &labels).unwrap();
        prop_assert_eq!(a, b);
    }
}
