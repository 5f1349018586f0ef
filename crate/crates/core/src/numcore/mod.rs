//! Deterministic dense-tensor math: tensors, shared forward kernels,
//! tape-based reverse-mode differentiation, Adam, and a finite-difference
//! gradient checker. Everything downstream builds on this module.

pub mod gradcheck;
pub mod kernels;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, REL_FLOOR};
pub use optim::{adam_step, AdamParams, AdamState, GradRecord, ParamGroup, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::{clamped_ln, cross_entropy, real, softmax, Real, Tensor, LOG_CLAMP};
