//! Model families, training, and checkpoints.

mod arch;
mod checkpoint;
mod train;

pub use arch::{build_model, Arch};
pub use checkpoint::{load_checkpoint, model_hash, param_hash, save_checkpoint, Checkpoint, CheckpointMeta};
pub use train::{accuracy, predictions, train_model, TrainHyper, TrainMetrics};

use crate::data::Dataset;
use crate::diff::Model;
use crate::error::Result;

/// Builds, trains, and wraps a model as a checkpoint in one step.
pub fn train_checkpoint(
    arch: Arch,
    init_seed: u64,
    train: &Dataset,
    test: &Dataset,
    hyper: &TrainHyper,
) -> Result<Checkpoint> {
    let (model, metrics) = train_model(build_model(arch, init_seed)?, train, test, hyper)?;
    Checkpoint::new(
        arch,
        &model,
        CheckpointMeta {
            seed: init_seed,
            epochs: hyper.epochs,
            lr: hyper.lr,
            final_train_acc: metrics.train_acc,
            final_test_acc: metrics.test_acc,
            dataset_seed: train.seed,
            content_hash: 0,
        },
    )
}

/// Fraction of rows on which two models predict different classes.
pub fn disagreement(a: &Model, b: &Model, data: &Dataset) -> Result<f64> {
    let pa = predictions(a, &data.images)?;
    let pb = predictions(b, &data.images)?;
    Ok(pa.iter().zip(&pb).filter(|(p, q)| p != q).count() as f64 / data.len() as f64)
}
