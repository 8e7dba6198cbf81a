use crate::diff::Model;
use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

/// Result of [`prop1_residual_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Outcome {
    pub delta: Tensor,
    /// `‖f_{θ+η}(x) − f_θ(x+δ)‖₂` at the returned δ.
    pub residual: f64,
    /// The same distance at δ = 0.
    pub residual0: f64,
    pub steps_taken: usize,
}

fn offset(x: &Tensor, delta: &Tensor) -> Result<Tensor> {
    let data = x.data().iter().zip(delta.data()).map(|(a, b)| a + b).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Squared residual and logit difference `f_θ(x+δ) − target`.
fn objective(model: &Model, x: &Tensor, delta: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let out = model.forward(&offset(x, delta)?)?;
    let diff: Vec<f64> = out.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
    let sq = diff.iter().map(|d| d * d).sum();
    Ok((sq, Tensor::new(out.shape().to_vec(), diff)?))
}

/// Searches for an input perturbation δ with `f_θ(x+δ) ≈ f_{θ+s·η}(x)`.
///
/// Gradient descent on `‖f_{θ+s·η}(x) − f_θ(x+δ)‖₂²` from δ = 0, summed over
/// the batch. The step starts at `step_size`; a step that would raise the
/// objective is halved and retried, an accepted step grows it by 1.2×. The
/// search stops early when no step size decreases the objective.
pub fn prop1_residual_search(
    model: &Model,
    x: &Tensor,
    eta: &ParamSet,
    eta_scale: f64,
    steps: usize,
    step_size: f64,
) -> Result<Prop1Outcome> {
    model.check_input(x)?;
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step_size must be positive, got {step_size}"
        )));
    }
    let mut delta = Tensor::zeros(x.shape().to_vec());
    if eta_scale == 0.0 {
        model.params().check_layout(eta)?;
        return Ok(Prop1Outcome {
            delta,
            residual: 0.0,
            residual0: 0.0,
            steps_taken: 0,
        });
    }
    let target = model.perturb_params(eta, eta_scale)?.forward(x)?;
    let (mut obj, mut diff) = objective(model, x, &delta, &target)?;
    let residual0 = obj.sqrt();
    let mut lr = step_size;
    let mut taken = 0;
    while taken < steps && obj > 0.0 {
        let cot = Tensor::new(diff.shape().to_vec(), diff.data().iter().map(|d| 2.0 * d).collect())?;
        let (grad, _) = model.vjp(&offset(x, &delta)?, &cot)?;
        let mut accepted = false;
        for _ in 0..60 {
            let data = delta.data().iter().zip(grad.data()).map(|(d, g)| d - lr * g).collect();
            let trial = Tensor::new(delta.shape().to_vec(), data)?;
            let (o, d) = match objective(model, x, &trial, &target) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => (f64::INFINITY, diff.clone()),
                Err(e) => return Err(e),
            };
            if o.is_finite() && o <= obj {
                delta = trial;
                obj = o;
                diff = d;
                lr *= 1.2;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
        taken += 1;
    }
    if !obj.is_finite() || !delta.is_finite() {
        return Err(Error::non_finite(format!("residual search after {taken} steps")));
    }
    Ok(Prop1Outcome {
        delta,
        residual: obj.sqrt(),
        residual0,
        steps_taken: taken,
    })
}
