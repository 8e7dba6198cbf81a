//! Evaluation of adversarial batches: success rates, the weight-perturbation
//! transferability score, empirical transfer gaps, gradient-norm profiles,
//! the input-for-weight residual search, and correlation statistics.

mod corr;
mod prop1;
mod report;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::attacks::AdversarialBatch;
use crate::data::Dataset;
use crate::diff::Model;
use crate::error::{Error, Result};
use crate::hash::{derive_seed, rng};
use crate::tensor::{l2, ParamSet, Tensor};
use crate::zoo::predictions;

pub use corr::{average_ranks, correlation, pearson, spearman, CorrKind};
pub use prop1::{prop1_residual_search, Prop1Outcome};
pub use report::{AsrCell, CorrelationEntry, FlatnessEntry, ModelEntry, ScatterPoint, TScoreEntry, TransferReport};

/// Number of weight perturbations per score unless configured otherwise.
pub const DEFAULT_N_ETA: usize = 10;
/// Perturbation scales of the measurement protocol.
pub const DEFAULT_EPS_LIST: [f64; 3] = [0.001, 0.01, 0.1];

/// Fraction of samples whose adversarial prediction differs from the label.
pub fn attack_success_rate(target: &Model, batch: &AdversarialBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty adversarial batch".into()));
    }
    let pred = predictions(target, &batch.x_adv)?;
    let wrong = pred.iter().zip(&batch.labels).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / batch.len() as f64)
}

/// Per-sample transferability contributions on inputs `x`: for each sample,
/// the mean over `n_eta` Gaussian weight perturbations (std `eps` on every
/// parameter) of the ℓ₂ distance between perturbed and clean logits.
///
/// Perturbation `i` is drawn from its own stream `(seed, i)` and results are
/// averaged in index order, so the output does not depend on scheduling.
pub fn transfer_contributions(x: &Tensor, surrogate: &Model, eps: f64, n_eta: usize, seed: u64) -> Result<Vec<f64>> {
    if n_eta == 0 {
        return Err(Error::InvalidArgument("n_eta must be at least 1".into()));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be finite and non-negative, got {eps}"
        )));
    }
    let normal = Normal::new(0.0, eps).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let batch = surrogate.check_input(x)?;
    if eps == 0.0 {
        return Ok(vec![0.0; batch]);
    }
    let clean = surrogate.forward(x)?;
    let layout = surrogate.params().layout().clone();
    let per_eta: Vec<Vec<f64>> = (0..n_eta)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(derive_seed(seed, "eta", i as u64));
            let eta = (0..layout.total_dim()).map(|_| normal.sample(&mut r)).collect();
            let perturbed = surrogate.perturb_params(&ParamSet::from_flat(layout.clone(), eta)?, 1.0)?;
            let logits = perturbed.forward(x)?;
            Ok(logits
                .rows()
                .zip(clean.rows())
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                .collect())
        })
        .collect::<Result<_>>()?;
    let inv = 1.0 / n_eta as f64;
    let mut out = vec![0.0; batch];
    for dists in &per_eta {
        for (o, d) in out.iter_mut().zip(dists) {
            *o += d;
        }
    }
    for o in &mut out {
        *o *= inv;
        if !o.is_finite() {
            return Err(Error::non_finite("transfer score"));
        }
    }
    Ok(out)
}

/// Transferability score of a batch on its surrogate: mean of
/// [`transfer_contributions`] over the adversarial inputs. Lower means more
/// transferable.
pub fn transfer_score(batch: &AdversarialBatch, surrogate: &Model, eps: f64, n_eta: usize, seed: u64) -> Result<f64> {
    let c = transfer_contributions(&batch.x_adv, surrogate, eps, n_eta, seed)?;
    Ok(c.iter().sum::<f64>() / c.len() as f64)
}

/// Per sample, `|logit_y(x_clean) − logit_y(x_adv)|` on `target`.
pub fn empirical_transfer_gap(target: &Model, batch: &AdversarialBatch) -> Result<Vec<f64>> {
    let clean = target.forward(&batch.x_clean)?;
    let adv = target.forward(&batch.x_adv)?;
    let k = target.num_classes();
    batch
        .labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if y >= k {
                return Err(Error::LabelOutOfRange { label: y, classes: k });
            }
            Ok((clean.row(i)[y] - adv.row(i)[y]).abs())
        })
        .collect()
}

/// Per-sample `‖∇_{x′} ℓ(x′, y; θ)‖₂` at the adversarial inputs.
pub fn adversarial_grad_norms(surrogate: &Model, batch: &AdversarialBatch) -> Result<Vec<f64>> {
    let (g, _) = surrogate.input_grad_per_sample(&batch.x_adv, &batch.labels)?;
    Ok(g.rows().map(l2).collect())
}

/// Mean of [`adversarial_grad_norms`]; smaller means a flatter loss surface
/// around the adversarial examples.
pub fn flatness(surrogate: &Model, batch: &AdversarialBatch) -> Result<f64> {
    let n = adversarial_grad_norms(surrogate, batch)?;
    Ok(n.iter().sum::<f64>() / n.len() as f64)
}

/// Per-sample input and parameter gradient norms, raw and standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct GradNormProfile {
    pub input_norms: Vec<f64>,
    pub param_norms: Vec<f64>,
    pub input_normalized: Vec<f64>,
    pub param_normalized: Vec<f64>,
}

impl GradNormProfile {
    pub fn len(&self) -> usize {
        self.input_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_norms.is_empty()
    }
}

/// `(g − μ)/σ` with the population standard deviation; all zeros when `σ = 0`.
pub fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// Gradient norms of each sample's own loss for the first `max_samples`
/// points of `data`.
pub fn grad_norm_profile(model: &Model, data: &Dataset, max_samples: usize) -> Result<GradNormProfile> {
    if max_samples < 3 {
        return Err(Error::InvalidArgument(format!(
            "max_samples must be at least 3, got {max_samples}"
        )));
    }
    let (x, y) = data.head(max_samples.min(data.len()));
    let pairs: Vec<(f64, f64)> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let xi = x.select_rows(&[i]);
            let g = model.grad_dual(&xi, &y[i..=i])?;
            Ok((g.wrt_input.l2_norm(), g.wrt_params.l2_norm()))
        })
        .collect::<Result<_>>()?;
    let (input_norms, param_norms): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(GradNormProfile {
        input_normalized: standardize(&input_norms),
        param_normalized: standardize(&param_norms),
        input_norms,
        param_norms,
    })
}

#[cfg(test)]
mod tests;
