use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diff::Model;
use crate::error::{Error, Result};
use crate::hash::{derive_seed, rng};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch: 64,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub epochs: usize,
    /// Mean training loss of the last epoch (NaN when no epoch ran).
    pub final_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

pub fn predictions(model: &Model, x: &Tensor) -> Result<Vec<usize>> {
    Ok(model.forward(x)?.rows().map(argmax).collect())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    let preds = predictions(model, &data.images)?;
    let correct = preds.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Minibatch SGD with heavy-ball momentum (`v ← μv + g`, `θ ← θ − lr·v`) on
/// mean cross-entropy. Epoch `e` shuffles with the stream
/// `derive_seed(hyper.seed, "shuffle", e)`.
pub fn train_model(model: Model, train: &Dataset, test: &Dataset, hyper: &TrainHyper) -> Result<(Model, TrainMetrics)> {
    if hyper.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    model.check_input(&train.images)?;
    model.check_input(&test.images)?;

    let mut params = model.params().clone();
    let mut velocity = ParamSet::zeros(params.layout().clone());
    let mut current = model;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut final_loss = f64::NAN;

    for epoch in 0..hyper.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng(derive_seed(hyper.seed, "shuffle", epoch as u64)));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(hyper.batch).enumerate() {
            let (x, y) = train.select(idx);
            let (loss, grad) = current.grad_params(&x, &y).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence { epoch, batch: b },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            velocity.scale(hyper.momentum);
            velocity.axpy(1.0, &grad)?;
            params.axpy(-hyper.lr, &velocity)?;
            if !params.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            current = current.with_params(params.clone())?;
            loss_sum += loss;
            batches += 1;
        }
        final_loss = loss_sum / batches as f64;
    }

    let metrics = TrainMetrics {
        epochs: hyper.epochs,
        final_loss,
        train_acc: accuracy(&current, train)?,
        test_acc: accuracy(&current, test)?,
    };
    Ok((current, metrics))
}
