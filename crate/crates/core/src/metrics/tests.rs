use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::attacks::{run_attack, AttackConfig, Method};
use crate::data::{gen_glyphs, Split};
use crate::diff::Layer;
use crate::zoo::{build_model, train_model, Arch, TrainHyper};

fn identity2() -> Model {
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

fn batch_of(clean: Vec<f64>, adv: Vec<f64>, dim: usize, labels: Vec<usize>) -> AdversarialBatch {
    let m = labels.len();
    AdversarialBatch {
        x_clean: Tensor::new(vec![m, dim], clean).unwrap(),
        x_adv: Tensor::new(vec![m, dim], adv).unwrap(),
        labels,
        config: AttackConfig::new(Method::Mi),
        surrogate_hash: 0,
        degenerate_steps: 0,
    }
}

fn trained_small() -> (Model, Dataset) {
    let (train, test) = gen_glyphs(5, 600, 100).unwrap();
    let hyper = TrainHyper {
        epochs: 3,
        seed: 2,
        ..TrainHyper::default()
    };
    let (model, _) = train_model(build_model(Arch::MlpSmall, 2).unwrap(), &train, &test, &hyper).unwrap();
    (model, test)
}

#[test]
fn asr_is_zero_without_attack() {
    let clean = vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3];
    let b = batch_of(clean.clone(), clean, 2, vec![0, 1, 0]);
    assert_eq!(attack_success_rate(&identity2(), &b).unwrap(), 0.0);
}

#[test]
fn asr_counts_wrong_predictions() {
    let clean = vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.1, 0.6];
    let adv = vec![0.1, 0.9, 0.2, 0.8, 0.7, 0.3, 0.9, 0.6];
    let b = batch_of(clean, adv, 2, vec![0, 1, 0, 1]);
    assert_eq!(attack_success_rate(&identity2(), &b).unwrap(), 0.5);
}

#[test]
fn asr_rejects_empty_batch() {
    let mut b = batch_of(vec![0.0, 0.0], vec![0.0, 0.0], 2, vec![0]);
    b.labels.clear();
    assert!(attack_success_rate(&identity2(), &b).is_err());
}

#[test]
fn white_box_asr_matches_recount() {
    let (model, test) = trained_small();
    let (x, y) = test.head(40);
    let b = run_attack(&model, &x, &y, &AttackConfig::new(Method::Mi)).unwrap();
    let logits = model.forward(&b.x_adv).unwrap();
    let mut wrong = 0;
    for (row, &label) in logits.rows().zip(&y) {
        let best = row
            .iter()
            .enumerate()
            .fold(0, |bi, (i, v)| if *v > row[bi] { i } else { bi });
        wrong += usize::from(best != label);
    }
    assert_eq!(attack_success_rate(&model, &b).unwrap(), wrong as f64 / 40.0);
    assert!(wrong > 20);
}

fn scalar_model(theta: f64) -> Model {
    let w = ParamSet::from_entries(vec![(
        "l0.weight".into(),
        Tensor::new(vec![1, 1], vec![theta]).unwrap(),
    )])
    .unwrap();
    Model::new(vec![1], vec![Layer::Linear { inputs: 1, outputs: 1 }], w).unwrap()
}

#[test]
fn transfer_score_is_zero_at_zero_eps() {
    let (model, test) = trained_small();
    let (x, y) = test.head(5);
    let b = run_attack(&model, &x, &y, &AttackConfig::new(Method::Mi)).unwrap();
    assert_eq!(transfer_score(&b, &model, 0.0, 10, 1).unwrap(), 0.0);
}

#[test]
fn transfer_score_matches_folded_gaussian() {
    // f = θ·x with θ = 1, x = 2: E|η·x| = 2·eps·√(2/π)
    let m = scalar_model(1.0);
    let b = batch_of(vec![2.0], vec![2.0], 1, vec![0]);
    for eps in [0.01, 0.1] {
        let expected = 2.0 * eps * (2.0 / std::f64::consts::PI).sqrt();
        let got = transfer_score(&b, &m, eps, 100_000, 9).unwrap();
        assert!(
            (got - expected).abs() <= 0.01 * expected,
            "eps {eps}: {got} vs {expected}"
        );
    }
}

#[test]
fn transfer_score_is_deterministic_and_seeded() {
    let (model, test) = trained_small();
    let (x, _) = test.head(8);
    let a = transfer_contributions(&x, &model, 0.01, 4, 3).unwrap();
    assert_eq!(a, transfer_contributions(&x, &model, 0.01, 4, 3).unwrap());
    assert_ne!(a, transfer_contributions(&x, &model, 0.01, 4, 4).unwrap());
}

#[test]
fn transfer_score_grows_with_eps() {
    let (model, test) = trained_small();
    let (x, y) = test.head(20);
    let b = run_attack(&model, &x, &y, &AttackConfig::new(Method::Mi)).unwrap();
    let s: Vec<f64> = DEFAULT_EPS_LIST
        .iter()
        .map(|&e| transfer_score(&b, &model, e, 10, 5).unwrap())
        .collect();
    assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
}

#[test]
fn transfer_score_argument_errors() {
    let m = scalar_model(1.0);
    let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
    assert!(transfer_contributions(&x, &m, 0.1, 0, 1).is_err());
    assert!(transfer_contributions(&x, &m, -0.1, 1, 1).is_err());
    assert!(transfer_contributions(&x, &m, f64::NAN, 1, 1).is_err());
}

#[test]
fn gap_is_zero_without_attack() {
    let clean = vec![0.3, 0.7, 0.5, 0.5];
    let b = batch_of(clean.clone(), clean, 2, vec![0, 1]);
    assert_eq!(empirical_transfer_gap(&identity2(), &b).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn gap_hand_logit_difference() {
    let b = batch_of(vec![0.3, 0.7], vec![0.1, 0.7], 2, vec![0]);
    let g = empirical_transfer_gap(&identity2(), &b).unwrap();
    assert!((g[0] - 0.2).abs() < 1e-15);
}

#[test]
fn gap_ignores_a_shared_bias_shift() {
    let (model, test) = trained_small();
    let (x, y) = test.head(10);
    let b = run_attack(&model, &x, &y, &AttackConfig::new(Method::Mi)).unwrap();
    let mut shift = ParamSet::zeros(model.params().layout().clone());
    let last_bias = model.params().layout().specs().last().unwrap().range();
    for v in &mut shift.flat_mut()[last_bias] {
        *v = 3.5;
    }
    let shifted = model.perturb_params(&shift, 1.0).unwrap();
    let a = empirical_transfer_gap(&model, &b).unwrap();
    let s = empirical_transfer_gap(&shifted, &b).unwrap();
    for (p, q) in a.iter().zip(&s) {
        assert!((p - q).abs() <= 1e-12);
    }
}

/// Ranks by counting: `1 + #{smaller} + (#{equal} − 1)/2`.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let eq = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

#[test]
fn correlation_examples() {
    let a = [1.0, 2.0, 3.0];
    assert!((pearson(&a, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((spearman(&a, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&a, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    let t = [1.0, 2.0, 2.0, 4.0];
    assert!((spearman(&t, &[10.0, 20.0, 20.0, 25.0]).unwrap() - 1.0).abs() < 1e-15);
    let ys = [10.0, 20.0, 30.0, 25.0];
    let oracle = naive_pearson(&brute_ranks(&t), &brute_ranks(&ys));
    assert!((spearman(&t, &ys).unwrap() - oracle).abs() < 1e-12);
    assert_eq!(average_ranks(&t), vec![1.0, 2.5, 2.5, 4.0]);
}

#[test]
fn correlation_errors() {
    assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(spearman(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    assert!(correlation(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0], CorrKind::Pearson).is_err());
}

#[test]
fn saturated_model_has_flat_profile() {
    // zero weights, huge bias on class 0, every label 0: all gradients vanish
    let zero = build_model(Arch::MlpSmall, 0).unwrap();
    let mut p = ParamSet::zeros(zero.params().layout().clone());
    let last = p.layout().specs().last().unwrap().range();
    p.flat_mut()[last.start] = 1000.0;
    let model = zero.with_params(p).unwrap();
    let (_, test) = gen_glyphs(1, 4, 10).unwrap();
    let data = Dataset {
        labels: vec![0; test.len()],
        ..test
    };
    let prof = grad_norm_profile(&model, &data, 10).unwrap();
    assert!(prof.input_norms.iter().chain(&prof.param_norms).all(|&v| v == 0.0));
    assert!(prof
        .input_normalized
        .iter()
        .chain(&prof.param_normalized)
        .all(|&v| v == 0.0));
}

#[test]
fn profile_normalization_and_correlation() {
    let (model, test) = trained_small();
    let prof = grad_norm_profile(&model, &test, 100).unwrap();
    assert_eq!(prof.len(), 100);
    for v in [&prof.input_normalized, &prof.param_normalized] {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 1e-10 && (sd - 1.0).abs() <= 1e-10);
    }
    assert!(grad_norm_profile(&model, &test, 2).is_err());
    assert_eq!(test.split, Split::Test);
}

#[test]
fn prop1_zero_scale_returns_immediately() {
    let (model, test) = trained_small();
    let (x, _) = test.head(2);
    let eta = model.params().clone();
    let out = prop1_residual_search(&model, &x, &eta, 0.0, 100, 0.1).unwrap();
    assert_eq!(out.residual0, 0.0);
    assert_eq!(out.residual, 0.0);
    assert_eq!(out.steps_taken, 0);
    assert!(out.delta.data().iter().all(|&v| v == 0.0));
}

#[test]
fn prop1_solves_the_invertible_linear_case() {
    let w = [2.0, 1.0, 0.5, 3.0];
    let params = ParamSet::from_entries(vec![
        ("l0.weight".into(), Tensor::new(vec![2, 2], w.to_vec()).unwrap()),
        ("l0.bias".into(), Tensor::from_vec(vec![0.1, -0.2])),
    ])
    .unwrap();
    let model = Model::new(vec![2], vec![Layer::Dense { inputs: 2, outputs: 2 }], params).unwrap();
    let eta = ParamSet::from_entries(vec![
        (
            "l0.weight".into(),
            Tensor::new(vec![2, 2], vec![0.3, -0.1, 0.2, 0.4]).unwrap(),
        ),
        ("l0.bias".into(), Tensor::from_vec(vec![0.05, 0.1])),
    ])
    .unwrap();
    let x = [0.6, 0.2];
    let s = 0.1;
    // W δ = s·(η_W x + η_b)  →  δ = W⁻¹ · rhs
    let e = eta.flat();
    let rhs = [
        s * (e[0] * x[0] + e[1] * x[1] + e[4]),
        s * (e[2] * x[0] + e[3] * x[1] + e[5]),
    ];
    let det = w[0] * w[3] - w[1] * w[2];
    let oracle = [
        (w[3] * rhs[0] - w[1] * rhs[1]) / det,
        (-w[2] * rhs[0] + w[0] * rhs[1]) / det,
    ];

    let xt = Tensor::new(vec![1, 2], x.to_vec()).unwrap();
    let out = prop1_residual_search(&model, &xt, &eta, s, 2000, 0.05).unwrap();
    assert!(out.residual0 > 0.01);
    assert!(out.residual <= 1e-8, "{}", out.residual);
    for (d, o) in out.delta.data().iter().zip(oracle) {
        assert!((d - o).abs() <= 1e-7);
    }
}

#[test]
fn prop1_shrinks_the_residual_on_a_trained_model() {
    let (model, test) = trained_small();
    let (x, _) = test.head(1);
    let mut r = crate::hash::rng(4);
    let eta = ParamSet::from_flat(
        model.params().layout().clone(),
        (0..model.params().total_dim())
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let scale = 0.01 * model.params().l2_norm() / eta.l2_norm();
    let out = prop1_residual_search(&model, &x, &eta, scale, 500, 0.01).unwrap();
    assert!(
        out.residual <= 0.1 * out.residual0,
        "{} vs {}",
        out.residual,
        out.residual0
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spearman_matches_rank_oracle(v in prop::collection::vec((0u8..6, 0u8..6), 3..12)) {
        let xs: Vec<f64> = v.iter().map(|p| f64::from(p.0)).collect();
        let ys: Vec<f64> = v.iter().map(|p| f64::from(p.1)).collect();
        let (rx, ry) = (brute_ranks(&xs), brute_ranks(&ys));
        prop_assert_eq!(average_ranks(&xs), rx.clone());
        let constant = |r: &[f64]| r.iter().all(|&a| a == r[0]);
        match spearman(&xs, &ys) {
            Ok(rho) => prop_assert!((rho - naive_pearson(&rx, &ry)).abs() <= 1e-9),
            Err(_) => prop_assert!(constant(&rx) || constant(&ry)),
        }
    }

    #[test]
    fn pearson_is_bounded_and_symmetric(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..20)) {
        let xs: Vec<f64> = v.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = v.iter().map(|p| p.1).collect();
        if let Ok(r) = pearson(&xs, &ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((r - pearson(&ys, &xs).unwrap()).abs() <= 1e-12);
        }
    }
}
