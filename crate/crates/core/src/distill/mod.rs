//! On-policy distillation: the MSE + reverse-KL objective, the θ-only
//! training loop, ablation variants, and the KL-direction demonstration.

pub mod loss;
pub mod modes;
pub mod train;

pub use loss::{distill_loss, forward_kl, reverse_kl, AblationVariant, DistillLossParts};
pub use modes::{
    mode_seeking_demo, softened_onehot, MixtureSolution, ModeSeekingResult, MODE_TEMPERATURE,
};
pub use train::{
    distill_curve_csv, student_config_for, train_student, training_pairs, DistillCurvePoint,
    DistillHyper, DistillReport,
};
