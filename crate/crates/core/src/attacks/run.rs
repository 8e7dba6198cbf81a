use rand::Rng;

use super::ops::{awt_tune, checked_input_grad, momentum_update, neighborhood_grad, project_ball};
use super::{AdversarialBatch, AttackConfig, Method};
use crate::diff::Model;
use crate::error::{Error, Result};
use crate::hash::{derive_seed, rng};
use crate::tensor::{ParamSet, Tensor};
use crate::zoo::model_hash;

/// Number of points on the EMI sampling line.
pub const EMI_POINTS: usize = 11;
/// EMI samples at `c·α·g_t` for `c` evenly spaced in `[-EMI_BOUND, EMI_BOUND]`.
pub const EMI_BOUND: f64 = 7.0;
/// VMI samples its variance term in an ℓ∞ ball of `VMI_RADIUS·eps`.
pub const VMI_RADIUS: f64 = 1.5;

/// Iteration state of one attack run.
#[derive(Debug, Clone)]
pub struct AttackState {
    pub x_adv: Tensor,
    pub g_momentum: Tensor,
    pub t: usize,
    /// Surrogate weights at the start of the run (tuning methods only).
    pub theta_snapshot: Option<ParamSet>,
    /// Working copy of the surrogate; tuned in place by AWT.
    pub model: Model,
    /// VMI gradient-variance term carried to the next step.
    variance: Option<Tensor>,
    pub degenerate_steps: usize,
}

impl AttackState {
    fn new(surrogate: &Model, x_clean: &Tensor, cfg: &AttackConfig) -> Self {
        Self {
            x_adv: x_clean.clone(),
            g_momentum: Tensor::zeros(x_clean.shape().to_vec()),
            t: 0,
            theta_snapshot: (cfg.method == Method::Awt).then(|| surrogate.params().clone()),
            model: surrogate.clone(),
            variance: None,
            degenerate_steps: 0,
        }
    }

    /// Puts the snapshot weights back into the working model.
    fn restore(&mut self) -> Result<()> {
        if let Some(theta) = self.theta_snapshot.take() {
            self.model = self.model.with_params(theta)?;
        }
        Ok(())
    }
}

fn offset(x: &Tensor, dir: &Tensor, scale: f64) -> Result<Tensor> {
    let data = x.data().iter().zip(dir.data()).map(|(a, d)| a + scale * d).collect();
    Tensor::new(x.shape().to_vec(), data)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The aggregated gradient `ḡ` of one iteration for the non-tuning part of
/// each method.
fn step_gradient(state: &mut AttackState, y: &[usize], cfg: &AttackConfig) -> Result<Tensor> {
    let model = &state.model;
    let x_t = &state.x_adv;
    match cfg.method {
        Method::Mi => checked_input_grad(model, x_t, y),
        Method::Ni => {
            let look = offset(x_t, &state.g_momentum, cfg.alpha * cfg.mu)?;
            checked_input_grad(model, &look, y)
        }
        Method::Vmi => {
            let g = checked_input_grad(model, x_t, y)?;
            let radius = VMI_RADIUS * cfg.eps;
            let inv = 1.0 / cfg.n_samples as f64;
            let mut neighbor_mean = vec![0.0; g.len()];
            for i in 0..cfg.n_samples {
                let mut r = rng(derive_seed(cfg.rng_seed, "vmi", ((state.t as u64) << 32) | i as u64));
                let data = x_t
                    .data()
                    .iter()
                    .map(|&v| {
                        v + if radius > 0.0 {
                            r.random_range(-radius..=radius)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let gi = checked_input_grad(model, &Tensor::new(x_t.shape().to_vec(), data)?, y)?;
                for (m, v) in neighbor_mean.iter_mut().zip(gi.data()) {
                    *m += inv * v;
                }
            }
            let g_bar = match &state.variance {
                Some(v) => offset(&g, v, 1.0)?,
                None => g.clone(),
            };
            let variance = neighbor_mean.iter().zip(g.data()).map(|(m, gi)| m - gi).collect();
            state.variance = Some(Tensor::new(g.shape().to_vec(), variance)?);
            Ok(g_bar)
        }
        Method::Emi => {
            let mut acc = vec![0.0; x_t.len()];
            let inv = 1.0 / EMI_POINTS as f64;
            for j in 0..EMI_POINTS {
                let c = -EMI_BOUND + 2.0 * EMI_BOUND * j as f64 / (EMI_POINTS - 1) as f64;
                let point = offset(x_t, &state.g_momentum, c * cfg.alpha)?;
                let gj = checked_input_grad(model, &point, y)?;
                for (a, v) in acc.iter_mut().zip(gj.data()) {
                    *a += inv * v;
                }
            }
            Tensor::new(x_t.shape().to_vec(), acc)
        }
        Method::Pgn | Method::Ncs | Method::Awt => {
            let ng = neighborhood_grad(model, x_t, y, cfg, state.t)?;
            state.degenerate_steps += ng.skipped_lookaheads;
            Ok(ng.g_bar)
        }
    }
}

/// Runs `cfg.method` for `cfg.steps` iterations against `surrogate`.
///
/// Each iteration forms an aggregated gradient, applies the normalized
/// momentum update, takes an `α·sign(g)` step and projects back into the
/// ε-ball. AWT additionally tunes a private copy of the surrogate at the start
/// of every iteration; the caller's model is never touched.
pub fn run_attack(surrogate: &Model, x_clean: &Tensor, y: &[usize], cfg: &AttackConfig) -> Result<AdversarialBatch> {
    cfg.validate()?;
    let batch = surrogate.check_input(x_clean)?;
    if y.len() != batch {
        return Err(Error::Shape {
            expected: vec![batch],
            actual: vec![y.len()],
        });
    }
    let mut state = AttackState::new(surrogate, x_clean, cfg);
    for t in 0..cfg.steps {
        state.t = t;
        let ctx = |e: Error| e.in_stage(format!("{} step {t}", cfg.method));
        if cfg.method == Method::Awt {
            state.model = awt_tune(&state.model, x_clean, &state.x_adv, y, cfg.beta, cfg.lr).map_err(ctx)?;
        }
        let g_bar = step_gradient(&mut state, y, cfg).map_err(ctx)?;
        let step = momentum_update(&state.g_momentum, &g_bar, cfg.mu).map_err(ctx)?;
        state.degenerate_steps += step.degenerate_rows;
        state.g_momentum = step.g;
        let moved = state
            .x_adv
            .data()
            .iter()
            .zip(state.g_momentum.data())
            .map(|(x, g)| x + cfg.alpha * sign(*g))
            .collect();
        let moved = Tensor::new(state.x_adv.shape().to_vec(), moved)?;
        state.x_adv = project_ball(&moved, x_clean, cfg.eps)?;
    }
    state.restore()?;
    debug_assert_eq!(state.model.params(), surrogate.params());
    Ok(AdversarialBatch {
        x_clean: x_clean.clone(),
        x_adv: state.x_adv,
        labels: y.to_vec(),
        config: *cfg,
        surrogate_hash: model_hash(surrogate),
        degenerate_steps: state.degenerate_steps,
    })
}
