//! Iterative transfer attacks: MI, NI, VMI, EMI, the neighborhood-sampling
//! PGN/NCS estimators, and AWT (neighborhood sampling on a surrogate that is
//! re-tuned toward flat loss every iteration).

mod batch;
mod config;
mod ops;
mod run;

pub use batch::{load_batch, save_batch, AdversarialBatch};
pub use config::{AttackConfig, Method, DEFAULT_EPS, DEFAULT_STEPS};
pub use ops::{
    ascent_descent, awt_loss, awt_tune, momentum_update, neighborhood_grad, neighborhood_grad_from,
    neighborhood_samples, project_ball, MomentumStep, NeighborhoodGrad, DEGENERATE_L1,
};
pub use run::{run_attack, AttackState, EMI_BOUND, EMI_POINTS, VMI_RADIUS};
