//! Forward evaluation and reverse-mode gradients for small sequential
//! classifiers (dense, 3×3 conv, 2×2 average pooling, ReLU, flatten).

mod fd;
mod layer;
mod loss;
mod model;

pub use fd::{central_difference, fd_gradient, DEFAULT_FD_STEP};
pub use layer::Layer;
pub use loss::cross_entropy;
pub use model::{DualGradient, Model};

#[cfg(test)]
mod tests;
