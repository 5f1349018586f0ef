//! On-policy distillation of the frozen teacher into the predictor weights.
//!
//! Each optimizer step draws a batch of (query, document) pairs, runs the
//! student's own forward pass on them, asks the frozen teacher for targets
//! on exactly those pairs, and steps the predictor parameters θ — nothing
//! else. The backbone and head enter the tape as constants, so gradient
//! isolation is structural rather than policed: there is no closure through
//! which a frozen weight could receive an update.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::{augment_negatives, LabeledPair, RetrievalDataset, Split};
use crate::error::{Error, Result};
use crate::numcore::{AdamParams, AdamState, ParamSet, Real, Tape, Tensor, Var};
use crate::student::{encode_query_solo, predictor_depth, DocCache, PredictSpan, StudentConfig};
use crate::teacher::{teacher_targets, TeacherTargets};
use crate::tinylm::{params_hash, tokenize, LMConfig, TokenSeq};

use super::loss::AblationVariant;

#[derive(Debug, Clone)]
pub struct DistillHyper {
    /// Weight of the KL term against the (mean-reduced) MSE.
    pub w: f64,
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for DistillHyper {
    fn default() -> Self {
        DistillHyper { w: 0.25, lr: 1e-3, batch: 16, steps: 300, seed: 0 }
    }
}

/// Batch-mean loss parts at one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillCurvePoint {
    pub step: usize,
    pub mse: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DistillReport {
    pub curve: Vec<DistillCurvePoint>,
    pub steps: usize,
}

/// Render the loss curves as CSV (`step,mse,kl,total,variant,seed`).
pub fn distill_curve_csv(
    curve: &[DistillCurvePoint],
    variant: AblationVariant,
    seed: u64,
) -> String {
    let mut out = String::from("step,mse,kl,total,variant,seed\n");
    for p in curve {
        writeln!(out, "{},{:.9},{:.9},{:.9},{variant},{seed}", p.step, p.mse, p.kl, p.total)
            .expect("write to string");
    }
    out
}

/// All-negatives training pairs restricted to one split, in deterministic
/// dataset order.
pub fn training_pairs(dataset: &RetrievalDataset, split: Split) -> Vec<LabeledPair> {
    let keep: std::collections::BTreeSet<&str> =
        dataset.queries_in(split).iter().map(|q| q.id.as_str()).collect();
    augment_negatives(dataset)
        .into_iter()
        .filter(|p| keep.contains(p.query_id.as_str()))
        .collect()
}

/// Slice teacher targets down to the trained span.
fn align_targets<T: Real>(targets: TeacherTargets<T>, span: PredictSpan) -> TeacherTargets<T> {
    match span {
        PredictSpan::Full => targets,
        PredictSpan::Last => {
            let n = targets.query_states.rows();
            TeacherTargets {
                query_states: targets.query_states.slice_rows(n - 1..n),
                answer_probs: targets.answer_probs,
            }
        }
    }
}

/// Build one pair's loss on the step tape. Returns the total-loss node plus
/// the measured (mse, kl) values for the curve.
#[allow(clippy::too_many_arguments)]
fn pair_loss<T: Real>(
    tape: &mut Tape<T>,
    theta_layers: &[(Var, Var)],
    head: (Var, Var),
    solo_span: Var,
    z: &Tensor<T>,
    targets: &TeacherTargets<T>,
    w: f64,
    variant: AblationVariant,
) -> Result<(Var, f64, f64)> {
    let mut h = solo_span;
    for (l, &(wv, bv)) in theta_layers.iter().enumerate() {
        h = tape.linear(h, wv, bv)?;
        if l + 1 < theta_layers.len() {
            h = tape.relu(h);
        }
    }
    if variant != AblationVariant::WoMul {
        h = tape.mul_rows_const(h, z)?;
    }
    let pred = h;

    let mse = tape.mse_const(pred, &targets.query_states)?;
    let rows = tape.value(pred).rows();
    let last = tape.slice_rows(pred, rows - 1..rows)?;
    let logits = tape.linear(last, head.0, head.1)?;
    let kl = match variant {
        AblationVariant::ForwardKl => tape.forward_kl_logits(logits, &targets.answer_probs)?,
        _ => tape.reverse_kl_logits(logits, &targets.answer_probs)?,
    };

    let mse_value = Real::to_f64(tape.value(mse).scalar_value());
    let kl_value = Real::to_f64(tape.value(kl).scalar_value());
    let total = match variant {
        AblationVariant::WoKl => mse,
        AblationVariant::WoMse => {
            let zero = tape.constant(Tensor::scalar(T::zero()));
            tape.add_scaled(zero, kl, w)?
        }
        _ => tape.add_scaled(mse, kl, w)?,
    };
    Ok((total, mse_value, kl_value))
}

/// Distill the teacher into θ over `pairs`, mutating `theta` in place.
///
/// `params` is the frozen teacher (backbone + head); the cache must have
/// been indexed from exactly these parameters. Targets are produced by a
/// fresh teacher pass per batch pair — on-policy, no target store — so a
/// pair revisited at a later step is re-evaluated then.
#[allow(clippy::too_many_arguments)]
pub fn train_student<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    theta: &mut ParamSet<T>,
    cache: &DocCache<T>,
    dataset: &RetrievalDataset,
    pairs: &[LabeledPair],
    hyper: &DistillHyper,
    variant: AblationVariant,
    span: PredictSpan,
) -> Result<DistillReport> {
    if params.any_trainable() {
        return Err(Error::structural("teacher must be fully frozen before distillation"));
    }
    if cache.backbone_hash != params_hash(params) {
        return Err(Error::structural(
            "cache was indexed from a different backbone; re-index before distilling",
        ));
    }
    let depth = predictor_depth(theta);
    if depth == 0 {
        return Err(Error::structural("theta contains no predictor layers"));
    }
    for name in crate::student::predictor_group_names(depth) {
        if !theta.is_trainable(&name) {
            return Err(Error::structural(format!(
                "predictor group '{name}' is frozen; distillation trains all of θ"
            )));
        }
    }
    if hyper.w < 0.0 {
        return Err(Error::validation("KL weight w must be nonnegative"));
    }
    if hyper.batch == 0 {
        return Err(Error::validation("batch size must be positive"));
    }
    if pairs.is_empty() {
        return Err(Error::structural("no training pairs"));
    }

    // Resolve every referenced query and document once, up front.
    let mut query_tokens: BTreeMap<&str, TokenSeq> = BTreeMap::new();
    let mut doc_tokens: BTreeMap<&str, TokenSeq> = BTreeMap::new();
    for pair in pairs {
        if !query_tokens.contains_key(pair.query_id.as_str()) {
            let q = dataset
                .queries
                .iter()
                .find(|q| q.id == pair.query_id)
                .ok_or_else(|| Error::structural(format!("unknown query '{}'", pair.query_id)))?;
            query_tokens.insert(&pair.query_id, tokenize(cfg, &q.text));
        }
        if !doc_tokens.contains_key(pair.doc_id.as_str()) {
            let d = dataset
                .doc(&pair.doc_id)
                .ok_or_else(|| Error::structural(format!("unknown doc '{}'", pair.doc_id)))?;
            if cache.get(&pair.doc_id).is_none() {
                return Err(Error::structural(format!("doc '{}' missing from cache", pair.doc_id)));
            }
            doc_tokens.insert(&pair.doc_id, tokenize(cfg, &d.text));
        }
    }

    let mut report = DistillReport::default();
    if hyper.steps == 0 {
        return Ok(report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut adam = AdamState::new(AdamParams::with_lr(hyper.lr));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut step = 0usize;

    'outer: loop {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch) {
            if step >= hyper.steps {
                break 'outer;
            }
            let mut tape: Tape<T> = Tape::new();
            let theta_layers: Vec<(Var, Var)> = (0..depth)
                .map(|l| {
                    Ok((
                        tape.param(theta, &format!("pred.{l}.w"))?,
                        tape.param(theta, &format!("pred.{l}.b"))?,
                    ))
                })
                .collect::<Result<_>>()?;
            let head = (
                tape.constant(params.get("head.w")?.clone()),
                tape.constant(params.get("head.b")?.clone()),
            );

            // One solo encode per distinct query in the batch: the encoding
            // is document-independent, which is the bi-encoder's whole case.
            let mut solo_vars: BTreeMap<&str, Var> = BTreeMap::new();
            let mut totals = Vec::with_capacity(chunk.len());
            let (mut mse_sum, mut kl_sum) = (0.0f64, 0.0f64);
            for &idx in chunk {
                let pair = &pairs[idx];
                let qtok = &query_tokens[pair.query_id.as_str()];
                let solo = match solo_vars.get(pair.query_id.as_str()) {
                    Some(&v) => v,
                    None => {
                        let states = encode_query_solo(params, cfg, qtok)?.states;
                        let sliced = match span {
                            PredictSpan::Full => states,
                            PredictSpan::Last => states.slice_rows(states.rows() - 1..states.rows()),
                        };
                        let v = tape.constant(sliced);
                        solo_vars.insert(&pair.query_id, v);
                        v
                    }
                };
                let targets = align_targets(
                    teacher_targets(params, cfg, &doc_tokens[pair.doc_id.as_str()], qtok)?,
                    span,
                );
                let z = &cache.get(&pair.doc_id).expect("checked above").z;
                let (total, mse_v, kl_v) =
                    pair_loss(&mut tape, &theta_layers, head, solo, z, &targets, hyper.w, variant)?;
                totals.push(total);
                mse_sum += mse_v;
                kl_sum += kl_v;
            }

            let batch_loss = tape.mean_scalars(&totals)?;
            let loss_value = Real::to_f64(tape.value(batch_loss).scalar_value());
            if !loss_value.is_finite() {
                return Err(Error::Divergence(format!(
                    "distillation loss became non-finite at step {step}"
                )));
            }
            let grads = tape.backward(batch_loss)?;
            adam.apply(theta, &grads)?;
            step += 1;
            report.curve.push(DistillCurvePoint {
                step,
                mse: mse_sum / chunk.len() as f64,
                kl: kl_sum / chunk.len() as f64,
                total: loss_value,
            });
        }
    }
    report.steps = step;
    Ok(report)
}

/// The student configuration a variant trains (and must be scored) under.
pub fn student_config_for(variant: AblationVariant, span: PredictSpan) -> StudentConfig {
    StudentConfig { predict_span: span, use_doc_mul: variant != AblationVariant::WoMul }
}
