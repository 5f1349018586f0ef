//! Solo query encoding, score reconstruction, and top-k retrieval.
//!
//! Online cost per query: one backbone encode of the query block, then per
//! candidate document only the predictor MLP, a `d`-wide product with the
//! cached latent, and one head application — nothing scales with document
//! length, which is the whole point of the cache.

use crate::error::{Error, Result};
use crate::numcore::{softmax, ParamSet, Real, Tensor};
use crate::teacher::{relevance_from_score, render_query_block, score_from_probs, ScoreMode};
use crate::tinylm::{encode, lm_head, HiddenStates, LMConfig, TokenSeq};

use super::cache::{DocCache, DocCacheEntry};
use super::predictor::{predictor_forward, predictor_mlp, PredictSpan, StudentConfig};

/// What the student computes for one (query, document) candidate.
#[derive(Debug, Clone)]
pub struct StudentOutput<T: Real> {
    /// Predicted joint-space states over the scored span.
    pub predicted_query_states: Tensor<T>,
    /// Answer distribution read by the head at the final position.
    pub answer_probs: Tensor<T>,
    pub score: f64,
}

/// Encode the query block without any document: same tokens and the same
/// positions (offset by the slot width) as the query span of a joint pass,
/// but attention never sees document content. A pure function of the query —
/// every cached document reuses this one encoding.
pub fn encode_query_solo<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    query: &TokenSeq,
) -> Result<HiddenStates<T>> {
    let block = render_query_block(cfg, query);
    encode(params, cfg, &block, cfg.l_d_max)
}

/// Score one candidate from its cache entry and the predicted query states.
///
/// The concatenation "document states then predicted query states" ends at
/// the last predicted row, and only that final position feeds the head, so
/// the document part contributes no additional computation here.
pub fn student_score<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    entry: &DocCacheEntry<T>,
    predicted_query_states: &Tensor<T>,
    mode: ScoreMode,
) -> Result<StudentOutput<T>> {
    if predicted_query_states.rows() == 0 {
        return Err(Error::structural("student_score with an empty predicted span"));
    }
    if predicted_query_states.cols() != entry.z.len() {
        return Err(Error::structural(format!(
            "predicted states width {} does not match cached latent width {}",
            predicted_query_states.cols(),
            entry.z.len()
        )));
    }
    let last = predicted_query_states.rows() - 1;
    let final_state = predicted_query_states.slice_rows(last..last + 1);
    let logits = lm_head(params, cfg, &final_state)?;
    let answer_probs = softmax(&logits)?;
    let p_t = Real::to_f64(answer_probs.data()[cfg.true_id]);
    let p_f = Real::to_f64(answer_probs.data()[cfg.false_id]);
    let score = score_from_probs(mode, p_t, p_f);
    Ok(StudentOutput {
        predicted_query_states: predicted_query_states.clone(),
        answer_probs: Tensor::from_vec(answer_probs.data().to_vec()),
        score,
    })
}

/// Rank the whole cache for one query; returns the top `k` as
/// `(doc_id, relevance)` sorted by relevance descending, ties broken by
/// ascending doc id — the same contract as teacher reranking.
pub fn retrieve<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    theta: &ParamSet<T>,
    student_cfg: &StudentConfig,
    cache: &DocCache<T>,
    query: &TokenSeq,
    k: usize,
    mode: ScoreMode,
) -> Result<Vec<(String, f64)>> {
    if cache.is_empty() {
        return Err(Error::structural("retrieve over an empty cache"));
    }
    if k == 0 || k > cache.len() {
        return Err(Error::validation(format!(
            "k = {k} out of range for a cache of {} documents",
            cache.len()
        )));
    }
    if cache.d != cfg.d_model || cache.l_d_max != cfg.l_d_max {
        return Err(Error::structural(format!(
            "cache built for d={}, l_d_max={}, model has d={}, l_d_max={}",
            cache.d, cache.l_d_max, cfg.d_model, cfg.l_d_max
        )));
    }

    let solo = encode_query_solo(params, cfg, query)?;
    let span = match student_cfg.predict_span {
        PredictSpan::Full => solo.states.clone(),
        PredictSpan::Last => solo.states.slice_rows(solo.states.rows() - 1..solo.states.rows()),
    };

    let mut ranked = Vec::with_capacity(cache.len());
    for entry in &cache.entries {
        let predicted = if student_cfg.use_doc_mul {
            predictor_forward(theta, &span, &entry.z)?
        } else {
            predictor_mlp(theta, &span)?
        };
        let out = student_score(params, cfg, entry, &predicted, mode)?;
        ranked.push((entry.doc_id.clone(), relevance_from_score(mode, out.score)));
    }
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::DocRec;
    use crate::student::cache::index_documents;
    use crate::student::predictor::init_predictor;
    use crate::teacher::{teacher_score, teacher_targets};
    use crate::tinylm::{init_params, tokenize};

    fn cfg() -> LMConfig {
        LMConfig { d_model: 16, n_heads: 2, n_layers: 1, ..Default::default() }
    }

    fn frozen_params(cfg: &LMConfig) -> ParamSet<f32> {
        let mut p = init_params(cfg, 3).unwrap();
        p.freeze_all();
        p
    }

    #[test]
    fn solo_encoding_is_query_only_and_deterministic() {
        let cfg = cfg();
        let params = frozen_params(&cfg);
        let query = tokenize(&cfg, "north wind");
        let a = encode_query_solo(&params, &cfg, &query).unwrap();
        let b = encode_query_solo(&params, &cfg, &query).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.position_offset, cfg.l_d_max);
        assert_eq!(a.states.rows(), render_query_block(&cfg, &query).len());
    }

    #[test]
    fn solo_states_differ_from_joint_pass_query_states() {
        // In a joint pass the query positions attend into the document, so
        // the document must leave a trace; the solo encoding has none.
        let cfg = cfg();
        let params = frozen_params(&cfg);
        let query = tokenize(&cfg, "north wind");
        let doc = tokenize(&cfg, "RULE A: storm glass");
        let solo = encode_query_solo(&params, &cfg, &query).unwrap();
        let joint = teacher_targets(&params, &cfg, &doc, &query).unwrap();
        let diff = solo.states.max_abs_diff(&joint.query_states);
        assert!(diff > 1e-4, "document left no trace on joint query states (diff {diff})");
    }

    #[test]
    fn teacher_states_bypass_reproduces_teacher_score() {
        // Feeding the teacher's own joint query states through the scoring
        // path must give back the teacher's score: the predictor's target
        // is exact reconstruction, and at reconstruction the energy is zero.
        let cfg = cfg();
        let params = frozen_params(&cfg);
        let doc_text = "RULE A: storm glass";
        let docs = [DocRec { id: "d0".into(), text: doc_text.into() }];
        let cache = index_documents(&params, &cfg, &docs).unwrap();
        let query = tokenize(&cfg, "north wind");
        let doc = tokenize(&cfg, doc_text);

        let targets = teacher_targets(&params, &cfg, &doc, &query).unwrap();
        let out = student_score(
            &params,
            &cfg,
            cache.get("d0").unwrap(),
            &targets.query_states,
            ScoreMode::Eq8,
        )
        .unwrap();
        let direct = teacher_score(&params, &cfg, &doc, &query, ScoreMode::Eq8).unwrap();
        assert!((out.score - direct).abs() < 1e-6, "{} vs {direct}", out.score);

        let sum: f64 = out.answer_probs.data().iter().map(|&p| Real::to_f64(p)).sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn retrieval_bounds_and_singleton_pool() {
        let cfg = cfg();
        let params = frozen_params(&cfg);
        let docs = [DocRec { id: "only".into(), text: "RULE A: storm glass".into() }];
        let cache = index_documents(&params, &cfg, &docs).unwrap();
        let theta: ParamSet<f32> = init_predictor(cfg.d_model, 2, 0).unwrap();
        let query = tokenize(&cfg, "anything");
        let scfg = StudentConfig::new();

        let top = retrieve(&params, &cfg, &theta, &scfg, &cache, &query, 1, ScoreMode::Eq8)
            .unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, "only");

        for bad_k in [0, 2] {
            assert!(retrieve(&params, &cfg, &theta, &scfg, &cache, &query, bad_k, ScoreMode::Eq8)
                .is_err());
        }
    }

    #[test]
    fn identical_content_ties_break_by_ascending_id() {
        let cfg = cfg();
        let params = frozen_params(&cfg);
        let text = "RULE A: storm glass";
        let docs = [
            DocRec { id: "zz".into(), text: text.into() },
            DocRec { id: "aa".into(), text: text.into() },
            DocRec { id: "mm".into(), text: "RULE B: other words".into() },
        ];
        let cache = index_documents(&params, &cfg, &docs).unwrap();
        let theta: ParamSet<f32> = init_predictor(cfg.d_model, 2, 0).unwrap();
        let query = tokenize(&cfg, "anything");
        let ranked = retrieve(
            &params,
            &cfg,
            &theta,
            &StudentConfig::new(),
            &cache,
            &query,
            3,
            ScoreMode::Eq8,
        )
        .unwrap();
        let pos_aa = ranked.iter().position(|(id, _)| id == "aa").unwrap();
        let pos_zz = ranked.iter().position(|(id, _)| id == "zz").unwrap();
        assert_eq!(ranked[pos_aa].1, ranked[pos_zz].1, "identical docs must tie");
        assert_eq!(pos_zz, pos_aa + 1, "tie must resolve by ascending id");
    }

    #[test]
    fn last_span_mode_scores_only_the_final_position() {
        let cfg = cfg();
        let params = frozen_params(&cfg);
        let docs = [DocRec { id: "d0".into(), text: "RULE A: storm glass".into() }];
        let cache = index_documents(&params, &cfg, &docs).unwrap();
        let theta: ParamSet<f32> = init_predictor(cfg.d_model, 2, 0).unwrap();
        let query = tokenize(&cfg, "north wind");
        let scfg_full = StudentConfig::new();
        let scfg_last = StudentConfig { predict_span: PredictSpan::Last, ..scfg_full };

        // The final-position prediction is token-wise, so restricting the
        // span cannot change the score — only the training target.
        let full = retrieve(&params, &cfg, &theta, &scfg_full, &cache, &query, 1, ScoreMode::Eq8)
            .unwrap();
        let last = retrieve(&params, &cfg, &theta, &scfg_last, &cache, &query, 1, ScoreMode::Eq8)
            .unwrap();
        assert_eq!(full, last);
    }
}
