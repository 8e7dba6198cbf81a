use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn validate_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

/// Softmax cross-entropy of one logit row with log-sum-exp stabilization.
/// Writes `scale · (softmax − onehot(y))` into `dlogits` and returns the loss.
pub(crate) fn softmax_xent_row(logits: &[f64], y: usize, scale: f64, dlogits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &z) in dlogits.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *d = e;
        sum += e;
    }
    for d in dlogits.iter_mut() {
        *d = scale * (*d / sum);
    }
    dlogits[y] -= scale;
    max + sum.ln() - logits[y]
}

fn row_xent(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    max + sum.ln() - logits[y]
}

pub(crate) fn per_sample_xent(logits: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    if logits.shape().len() != 2 || logits.batch() != labels.len() {
        return Err(Error::Shape {
            expected: vec![labels.len(), logits.shape().last().copied().unwrap_or(0)],
            actual: logits.shape().to_vec(),
        });
    }
    let classes = logits.row_len();
    validate_labels(labels, classes)?;
    Ok(logits.rows().zip(labels).map(|(row, &y)| row_xent(row, y)).collect())
}

/// Mean softmax cross-entropy of raw logits `[B, K]` against labels.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let losses = per_sample_xent(logits, labels)?;
    let mean = losses.iter().sum::<f64>() * (1.0 / labels.len() as f64);
    if mean.is_finite() {
        Ok(mean)
    } else {
        Err(Error::non_finite("cross-entropy loss"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ce(logits: &[f64], y: usize) -> f64 {
        let t = Tensor::new(vec![1, logits.len()], logits.to_vec()).unwrap();
        cross_entropy(&t, &[y]).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        assert!((ce(&[0.0; 4], 2) - 4f64.ln()).abs() < 1e-12);
        assert!((ce(&[0.0; 4], 2) - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn hand_evaluated_values() {
        // -z_y + ln Σ e^{z_k}
        assert!((ce(&[1.0, 0.0], 1) - (1.0 + 1f64.exp()).ln()).abs() < 1e-12);
        assert!((ce(&[1.0, 0.0], 1) - 1.313262).abs() < 1e-6);
        let expected = (1.0 + 3.0 * (-10f64).exp()).ln();
        assert!((ce(&[10.0, 0.0, 0.0, 0.0], 0) - expected).abs() < 1e-15);
        assert!((ce(&[10.0, 0.0, 0.0, 0.0], 0) - 1.3619e-4).abs() < 1e-8);
    }

    #[test]
    fn stabilized_for_huge_logits() {
        let v = ce(&[1000.0, 0.0], 1);
        assert!((v - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let t = Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap();
        assert!(matches!(
            cross_entropy(&t, &[4]),
            Err(Error::LabelOutOfRange { label: 4, classes: 4 })
        ));
    }

    #[test]
    fn row_gradient_is_softmax_minus_onehot() {
        let mut d = [0.0; 2];
        let loss = softmax_xent_row(&[0.0, 0.0], 0, 1.0, &mut d);
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(d, [-0.5, 0.5]);
    }
}
