//! Pairwise relevance scoring and distillation-target extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{clamped_ln, softmax, ParamSet, Real, Tensor};
use crate::teacher::template::{render_instruction, InstructionRender};
use crate::tinylm::{encode, lm_head, LMConfig, TokenSeq};

/// How the answer-token probabilities are folded into a score.
///
/// `Eq8` is the log-ratio `log P(⟨T⟩) / (log P(⟨T⟩) + log P(⟨F⟩))`, which is
/// strictly *decreasing* in P(⟨T⟩): more confidence in relevance pushes the
/// score toward 0, so ranking sorts ascending in the score and reports
/// relevance `1 − s`. `ProbRatio` is the plain probability share
/// `P(⟨T⟩) / (P(⟨T⟩) + P(⟨F⟩))`, monotone increasing, kept as a cross-check:
/// whenever the two answer probabilities dominate jointly (their sum is a
/// fixed share of mass), the two modes induce the same ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    #[default]
    Eq8,
    ProbRatio,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq8" => Ok(ScoreMode::Eq8),
            "prob-ratio" => Ok(ScoreMode::ProbRatio),
            other => Err(Error::usage(format!(
                "unknown score mode '{other}' (expected eq8 | prob-ratio)"
            ))),
        }
    }
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMode::Eq8 => "eq8",
            ScoreMode::ProbRatio => "prob-ratio",
        })
    }
}

/// Fold a (P(⟨T⟩), P(⟨F⟩)) pair into the mode's raw score. Probabilities are
/// clamped to ≥ 1e-12 before any logarithm.
pub fn score_from_probs(mode: ScoreMode, p_true: f64, p_false: f64) -> f64 {
    match mode {
        ScoreMode::Eq8 => {
            let lt = clamped_ln(p_true);
            let lf = clamped_ln(p_false);
            let denom = lt + lf;
            if denom == 0.0 {
                // Both probabilities at 1 — unreachable from one softmax, but
                // the symmetric answer is the only sensible one.
                0.5
            } else {
                lt / denom
            }
        }
        ScoreMode::ProbRatio => {
            let (pt, pf) = (p_true.max(1e-12), p_false.max(1e-12));
            pt / (pt + pf)
        }
    }
}

/// Map a raw score to a "higher is more relevant" value in [0, 1].
pub fn relevance_from_score(mode: ScoreMode, score: f64) -> f64 {
    match mode {
        ScoreMode::Eq8 => 1.0 - score,
        ScoreMode::ProbRatio => score,
    }
}

/// Distillation targets for one (document, query) pair: the teacher's hidden
/// states over the query span and its answer-position distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTargets<T: Real> {
    /// [|query_span|, d].
    pub query_states: Tensor<T>,
    /// [vocab] softmax at the answer position.
    pub answer_probs: Tensor<T>,
}

fn ensure_frozen<T: Real>(params: &ParamSet<T>) -> Result<()> {
    if params.any_trainable() {
        return Err(Error::structural(
            "teacher inference requires frozen parameters (call freeze_all first)",
        ));
    }
    Ok(())
}

/// Joint-pass answer probabilities for an already-assembled render.
pub fn answer_probs_for_render<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    render: &InstructionRender,
) -> Result<Tensor<T>> {
    let states = encode(params, cfg, &render.tokens, 0)?;
    let row = states.states.slice_rows(render.answer_position..render.answer_position + 1);
    let logits = lm_head(params, cfg, &row)?;
    softmax(&logits)
}

/// P(⟨T⟩) and P(⟨F⟩) for a (document, query) pair, as 64-bit values.
pub fn pair_probs<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    doc: &TokenSeq,
    query: &TokenSeq,
) -> Result<(f64, f64)> {
    let render = render_instruction(cfg, doc, query)?;
    let probs = answer_probs_for_render(params, cfg, &render)?;
    Ok((Real::to_f64(probs.data()[cfg.true_id]), Real::to_f64(probs.data()[cfg.false_id])))
}

/// Score one pair under the chosen mode (see [`ScoreMode`] for direction).
pub fn teacher_score<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    doc: &TokenSeq,
    query: &TokenSeq,
    mode: ScoreMode,
) -> Result<f64> {
    let (p_t, p_f) = pair_probs(params, cfg, doc, query)?;
    Ok(score_from_probs(mode, p_t, p_f))
}

/// Extract distillation targets from one frozen-teacher joint pass.
pub fn teacher_targets_for_render<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    render: &InstructionRender,
) -> Result<TeacherTargets<T>> {
    ensure_frozen(params)?;
    let states = encode(params, cfg, &render.tokens, 0)?;
    let query_states = states.states.slice_rows(render.query_span.clone());
    let row = states.states.slice_rows(render.answer_position..render.answer_position + 1);
    let logits = lm_head(params, cfg, &row)?;
    let answer_probs = softmax(&logits)?;
    Ok(TeacherTargets {
        query_states,
        answer_probs: Tensor::from_vec(answer_probs.data().to_vec()),
    })
}

/// Convenience form of [`teacher_targets_for_render`] from raw sequences.
pub fn teacher_targets<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    doc: &TokenSeq,
    query: &TokenSeq,
) -> Result<TeacherTargets<T>> {
    let render = render_instruction(cfg, doc, query)?;
    teacher_targets_for_render(params, cfg, &render)
}

/// Rank a document pool for one query by teacher relevance, descending, ties
/// broken by ascending doc id — the same ordering contract as student
/// retrieval, so teacher and student metrics are directly comparable.
pub fn teacher_rank_pool<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    pool: &[(String, TokenSeq)],
    query: &TokenSeq,
    mode: ScoreMode,
) -> Result<Vec<(String, f64)>> {
    let mut ranked = Vec::with_capacity(pool.len());
    for (doc_id, doc) in pool {
        let s = teacher_score(params, cfg, doc, query, mode)?;
        ranked.push((doc_id.clone(), relevance_from_score(mode, s)));
    }
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}
