//! Transferable adversarial attacks on small self-trained classifiers.

mod binfmt;
mod error;
mod hash;
mod tensor;

pub mod attacks;
pub mod data;
pub mod diff;
pub mod harness;
pub mod metrics;
pub mod zoo;

pub use error::{Error, Result};
pub use hash::{derive_seed, fnv1a, rng, Fnv1a};
pub use tensor::{ParamLayout, ParamSet, ParamSpec, Tensor};
