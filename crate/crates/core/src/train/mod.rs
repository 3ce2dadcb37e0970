//! AdamW training loop with exact-match evaluation and milestone checkpoints.

mod optim;
mod trainer;

pub use optim::{adamw_step, adamw_update, clip_grad_norm, AdamWHyper, OptimState};
pub use trainer::*;
