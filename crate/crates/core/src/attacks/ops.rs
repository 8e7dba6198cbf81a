//! Building blocks shared by every attack: ball projection, the normalized
//! momentum update, the sampled neighborhood gradient, and surrogate tuning.

use rand::Rng;

use super::AttackConfig;
use crate::diff::Model;
use crate::error::{Error, Result};
use crate::hash::{derive_seed, rng};
use crate::tensor::{l1, ParamSet, Tensor};

/// L1 norms below this count as a vanishing gradient.
pub const DEGENERATE_L1: f64 = 1e-12;

/// Clamp into the ℓ∞ ball of radius `eps` around `x_clean`, then into `[0, 1]`.
pub fn project_ball(x_adv: &Tensor, x_clean: &Tensor, eps: f64) -> Result<Tensor> {
    same_shape(x_adv, x_clean)?;
    let data = x_adv
        .data()
        .iter()
        .zip(x_clean.data())
        .map(|(&a, &c)| a.clamp(c - eps, c + eps).clamp(0.0, 1.0))
        .collect();
    Tensor::new(x_adv.shape().to_vec(), data)
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::Shape {
            expected: b.shape().to_vec(),
            actual: a.shape().to_vec(),
        })
    }
}

/// Rows of a tensor: a 1-D tensor is a single row, otherwise the leading
/// axis indexes rows.
fn row_len(t: &Tensor) -> usize {
    if t.shape().len() == 1 {
        t.len()
    } else {
        t.row_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumStep {
    pub g: Tensor,
    /// Rows whose `ḡ` had vanishing L1 norm; those rows keep `μ·g_prev`.
    pub degenerate_rows: usize,
}

/// Row-wise `μ·g_prev + ḡ/‖ḡ‖₁`.
pub fn momentum_update(g_prev: &Tensor, g_bar: &Tensor, mu: f64) -> Result<MomentumStep> {
    same_shape(g_bar, g_prev)?;
    let n = row_len(g_prev);
    let mut out = Vec::with_capacity(g_prev.len());
    let mut degenerate_rows = 0;
    for (prev, bar) in g_prev.data().chunks(n).zip(g_bar.data().chunks(n)) {
        let norm = l1(bar);
        if norm < DEGENERATE_L1 {
            degenerate_rows += 1;
            out.extend(prev.iter().map(|p| mu * p));
        } else {
            out.extend(prev.iter().zip(bar).map(|(p, b)| mu * p + b / norm));
        }
    }
    Ok(MomentumStep {
        g: Tensor::new(g_prev.shape().to_vec(), out)?,
        degenerate_rows,
    })
}

pub(crate) fn checked_input_grad(model: &Model, x: &Tensor, y: &[usize]) -> Result<Tensor> {
    let (g, _) = model.input_grad_per_sample(x, y)?;
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::non_finite("input gradient"))
    }
}

/// Output of [`neighborhood_grad`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodGrad {
    pub g_bar: Tensor,
    /// Sample rows whose lookahead was skipped for a vanishing `g′`.
    pub skipped_lookaheads: usize,
}

/// Offsets drawn uniformly from the ℓ∞ ball of radius `zeta`, one stream
/// per `(seed, step, sample)`.
pub fn neighborhood_samples(x_t: &Tensor, zeta: f64, n: usize, seed: u64, step: usize) -> Vec<Tensor> {
    (0..n)
        .map(|i| {
            let mut r = rng(derive_seed(seed, "neighborhood", ((step as u64) << 32) | i as u64));
            let data = x_t
                .data()
                .iter()
                .map(|&v| {
                    let u: f64 = if zeta > 0.0 { r.random_range(-zeta..=zeta) } else { 0.0 };
                    v + u
                })
                .collect();
            Tensor::new(x_t.shape().to_vec(), data).expect("same shape as x_t")
        })
        .collect()
}

/// The sampled neighborhood gradient around `x_t`: for each of
/// `cfg.n_samples` uniform draws `x*` in the ζ-ball, take `g′ = ∇ℓ(x*)`, step
/// back to `x* − α·g′/‖g′‖₁`, take `g* = ∇ℓ` there, and average
/// `(1−ω)·g′ + ω·g*`. Sample streams are keyed by `(cfg.rng_seed, step, i)`.
pub fn neighborhood_grad(
    model: &Model,
    x_t: &Tensor,
    y: &[usize],
    cfg: &AttackConfig,
    step: usize,
) -> Result<NeighborhoodGrad> {
    if cfg.n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let samples = neighborhood_samples(x_t, cfg.zeta, cfg.n_samples, cfg.rng_seed, step);
    neighborhood_grad_from(model, &samples, y, cfg.alpha, cfg.omega)
}

/// [`neighborhood_grad`] over an explicit set of sampled points.
pub fn neighborhood_grad_from(
    model: &Model,
    samples: &[Tensor],
    y: &[usize],
    alpha: f64,
    omega: f64,
) -> Result<NeighborhoodGrad> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one neighborhood sample".into()))?;
    let n = row_len(first);
    let inv = 1.0 / samples.len() as f64;
    let mut g_bar = vec![0.0; first.len()];
    let mut skipped = 0;
    for x_star in samples {
        let g_prime = checked_input_grad(model, x_star, y)?;
        let mut look = x_star.data().to_vec();
        let mut skip = vec![false; y.len()];
        for (r, (row, g)) in look.chunks_mut(n).zip(g_prime.data().chunks(n)).enumerate() {
            let norm = l1(g);
            if norm < DEGENERATE_L1 {
                skip[r] = true;
                continue;
            }
            for (v, gi) in row.iter_mut().zip(g) {
                *v -= alpha * gi / norm;
            }
        }
        let g_star = checked_input_grad(model, &Tensor::new(x_star.shape().to_vec(), look)?, y)?;
        for (r, ((acc, gp), gs)) in g_bar
            .chunks_mut(n)
            .zip(g_prime.data().chunks(n))
            .zip(g_star.data().chunks(n))
            .enumerate()
        {
            let gs = if skip[r] { gp } else { gs };
            for ((a, p), s) in acc.iter_mut().zip(gp).zip(gs) {
                *a += inv * ((1.0 - omega) * p + omega * s);
            }
        }
        skipped += skip.iter().filter(|&&s| s).count();
    }
    Ok(NeighborhoodGrad {
        g_bar: Tensor::new(first.shape().to_vec(), g_bar)?,
        skipped_lookaheads: skipped,
    })
}

/// One ascent-then-descent step on parameters: `θ̂ = θ + β·∇L(θ)`, then
/// `θ − lr·∇L(θ̂)`. `grad` returns `(L, ∇L)` at the given parameters.
pub fn ascent_descent<F>(theta: &ParamSet, beta: f64, lr: f64, mut grad: F) -> Result<ParamSet>
where
    F: FnMut(&ParamSet) -> Result<(f64, ParamSet)>,
{
    let (loss, g1) = grad(theta)?;
    if !loss.is_finite() || !g1.is_finite() {
        return Err(Error::non_finite("tuning loss at the current weights"));
    }
    let mut theta_hat = theta.clone();
    theta_hat.axpy(beta, &g1)?;
    let (loss_hat, g2) = grad(&theta_hat)?;
    if !loss_hat.is_finite() || !g2.is_finite() {
        return Err(Error::non_finite("tuning loss at the ascended weights"));
    }
    let mut next = theta.clone();
    next.axpy(-lr, &g2)?;
    Ok(next)
}

/// `ℓ(x_adv, y; θ) + ℓ(x_clean, y; θ)` and its parameter gradient, each term
/// a batch mean.
pub fn awt_loss(model: &Model, x_clean: &Tensor, x_adv: &Tensor, y: &[usize]) -> Result<(f64, ParamSet)> {
    let (l_adv, mut g) = model.grad_params(x_adv, y)?;
    let (l_clean, g_clean) = model.grad_params(x_clean, y)?;
    g.axpy(1.0, &g_clean)?;
    Ok((l_adv + l_clean, g))
}

/// Sharpness-aware tuning of the surrogate on the tuning loss
/// `ℓ(x_adv) + ℓ(x_clean)`. The input model is never modified; on error no
/// new model is produced.
pub fn awt_tune(model: &Model, x_clean: &Tensor, x_adv: &Tensor, y: &[usize], beta: f64, lr: f64) -> Result<Model> {
    same_shape(x_adv, x_clean)?;
    let next = ascent_descent(model.params(), beta, lr, |theta| {
        awt_loss(&model.with_params(theta.clone())?, x_clean, x_adv, y)
    })?;
    model.with_params(next)
}
