//! Minimal reverse-mode differentiation over dense matrices.
//!
//! The vocabulary is deliberately small: matrix products, elementwise
//! arithmetic, broadcasting, a leaky rectifier, column softmax, inversion
//! and reductions, plus [`Tape::scalar_fn`] for fused scalar losses (the MMD
//! estimators) that compute their own input gradients during the forward
//! pass.

mod adam;
mod gradcheck;
mod param;
mod prox;
mod tape;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_with_limit};
pub use param::{Param, ParamId, ParamStore};
pub use prox::{prox_l1, soft_threshold, ProxConfig};
pub use tape::{Tape, Var};
