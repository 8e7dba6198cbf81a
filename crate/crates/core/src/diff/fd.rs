//! Central finite differences, the independent oracle for reverse-mode gradients.

use super::loss::cross_entropy;
use super::model::Model;
use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// `(f(v + h e_i) - f(v - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F>(mut f: F, v: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut probe = v.to_vec();
    let mut grad = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe)?;
        probe[i] = orig - h;
        let minus = f(&probe)?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Finite-difference gradients of the mean cross-entropy with respect to
/// the input batch and to every parameter.
pub fn fd_gradient(model: &Model, x: &Tensor, labels: &[usize], h: f64) -> Result<(Tensor, ParamSet)> {
    model.check_input(x)?;
    let shape = x.shape().to_vec();
    let gx = central_difference(
        |v| {
            let xi = Tensor::new(shape.clone(), v.to_vec())?;
            cross_entropy(&model.forward(&xi)?, labels)
        },
        x.data(),
        h,
    )?;
    let layout = model.params().layout().clone();
    let gp = central_difference(
        |v| {
            let p = ParamSet::from_flat(layout.clone(), v.to_vec())?;
            cross_entropy(&model.with_params(p)?.forward(x)?, labels)
        },
        model.params().flat(),
        h,
    )?;
    Ok((Tensor::new(shape, gx)?, ParamSet::from_flat(layout, gp)?))
}
