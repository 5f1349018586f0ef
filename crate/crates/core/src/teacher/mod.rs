//! The generative cross-encoding reranker: instruction templating, SFT over
//! all-negatives pairs, answer-token scoring, and distillation targets.

pub mod score;
pub mod sft;
pub mod template;

pub use score::{
    answer_probs_for_render, pair_probs, relevance_from_score, score_from_probs, teacher_rank_pool,
    teacher_score, teacher_targets, teacher_targets_for_render, ScoreMode, TeacherTargets,
};
pub use sft::{mean_ce, sft_train, CurvePoint, SftHyper, SftReport};
pub use template::{
    build_sft_dataset, render_instruction, render_query_block, template_hash, InstructionRender,
    QAExample,
};
