//! The binary-relevance instruction template and SFT example construction.
//!
//! The canonical template reads:
//!
//! ```text
//! Document: {D}
//! Query: {Q}
//! Can Query be appropriately responded with Document?
//! If the answer is true, choose <T>; otherwise, choose <F>.
//! ```
//!
//! In the token stream, `{D}` is realized as the fixed-width left-padded
//! document slot occupying positions `[0, l_d_max)` — the `Document:` label
//! text is deliberately not tokenized, because the slot must contain only
//! document-derived tokens for its hidden states to be cacheable and
//! reusable across every query. `<T>`/`<F>` are the two reserved single
//! token ids. The answer is read from the next-token distribution at the
//! final position (after the closing period).

use std::ops::Range;

use sha2::{Digest, Sha256};

use crate::datagen::{RetrievalDataset, Split};
use crate::error::{Error, Result};
use crate::tinylm::{pad_document, tokenize, LMConfig, TokenSeq};

pub const QUERY_PREFIX: &str = "\nQuery: ";
pub const QUESTION_MID: &str =
    "\nCan Query be appropriately responded with Document?\nIf the answer is true, choose ";
pub const CHOICE_SEP: &str = "; otherwise, choose ";
pub const TEMPLATE_END: &str = ".";

/// Hash of the template literals and reserved-id layout; carried in teacher
/// checkpoint metadata so downstream artifacts can refuse a render mismatch.
pub fn template_hash(cfg: &LMConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(QUERY_PREFIX.as_bytes());
    hasher.update([0]);
    hasher.update(QUESTION_MID.as_bytes());
    hasher.update([0]);
    hasher.update(CHOICE_SEP.as_bytes());
    hasher.update([0]);
    hasher.update(TEMPLATE_END.as_bytes());
    hasher.update([0]);
    for id in [cfg.pad_id, cfg.true_id, cfg.false_id, cfg.l_d_max] {
        hasher.update((id as u64).to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}

/// A fully assembled (document, query) prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionRender {
    pub tokens: TokenSeq,
    /// Index whose next-token distribution encodes ⟨T⟩/⟨F⟩ (the last position).
    pub answer_position: usize,
    /// `[0, l_d_max)` — depends only on the document.
    pub doc_span: Range<usize>,
    /// `[l_d_max, len)` — depends only on the query and the fixed template.
    pub query_span: Range<usize>,
}

impl InstructionRender {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn query_tokens(&self) -> TokenSeq {
        self.tokens.slice(self.query_span.clone())
    }
}

/// Number of fixed (non-query, non-document) tokens in the query block.
fn fixed_block_len(cfg: &LMConfig) -> usize {
    tokenize(cfg, QUERY_PREFIX).len()
        + tokenize(cfg, QUESTION_MID).len()
        + 1 // ⟨T⟩
        + tokenize(cfg, CHOICE_SEP).len()
        + 1 // ⟨F⟩
        + tokenize(cfg, TEMPLATE_END).len()
}

/// Assemble the query-side block: prefix, query, question, and the two
/// choice tokens. Exactly these tokens appear at positions `[l_d_max, len)`
/// of a joint render, so a standalone query encoding over this block (at
/// position offset `l_d_max`) is positionally identical to the joint pass.
///
/// Queries that would overflow the window are right-truncated with a warning.
pub fn render_query_block(cfg: &LMConfig, query: &TokenSeq) -> TokenSeq {
    let budget = cfg.max_window - cfg.l_d_max - fixed_block_len(cfg);
    let query = if query.len() > budget {
        log::warn!("query of {} tokens right-truncated to {budget} to fit the window", query.len());
        query.slice(0..budget)
    } else {
        query.clone()
    };
    let mut block = tokenize(cfg, QUERY_PREFIX);
    block = block.concat(&query);
    block = block.concat(&tokenize(cfg, QUESTION_MID));
    block.push_special(cfg.true_id);
    block = block.concat(&tokenize(cfg, CHOICE_SEP));
    block.push_special(cfg.false_id);
    block = block.concat(&tokenize(cfg, TEMPLATE_END));
    block
}

/// Assemble the full prompt: left-padded document slot followed by the query
/// block.
pub fn render_instruction(
    cfg: &LMConfig,
    doc: &TokenSeq,
    query: &TokenSeq,
) -> Result<InstructionRender> {
    let slot = pad_document(cfg, doc);
    let block = render_query_block(cfg, query);
    let tokens = slot.concat(&block);
    if tokens.len() > cfg.max_window {
        return Err(Error::structural(format!(
            "render of {} tokens exceeds window {}",
            tokens.len(),
            cfg.max_window
        )));
    }
    let len = tokens.len();
    Ok(InstructionRender {
        tokens,
        answer_position: len - 1,
        doc_span: 0..cfg.l_d_max,
        query_span: cfg.l_d_max..len,
    })
}

/// One SFT example: a rendered pair plus its ⟨T⟩/⟨F⟩ label.
#[derive(Debug, Clone)]
pub struct QAExample {
    pub query_id: String,
    pub doc_id: String,
    pub render: InstructionRender,
    /// `true_id` for annotated positives, else `false_id`.
    pub label: usize,
}

/// Render every (query, document) pair of a split — the all-negatives
/// expansion — into labeled SFT examples.
pub fn build_sft_dataset(
    cfg: &LMConfig,
    dataset: &RetrievalDataset,
    split: Split,
) -> Result<Vec<QAExample>> {
    dataset.validate()?;
    let mut examples = Vec::new();
    for q in dataset.queries_in(split) {
        let q_tokens = tokenize(cfg, &q.text);
        for d in &dataset.pool {
            let render = render_instruction(cfg, &tokenize(cfg, &d.text), &q_tokens)?;
            let positive = dataset.is_positive(&q.id, &d.id);
            examples.push(QAExample {
                query_id: q.id.clone(),
                doc_id: d.id.clone(),
                render,
                label: if positive { cfg.true_id } else { cfg.false_id },
            });
        }
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{synth_task, SynthRule};

    fn cfg() -> LMConfig {
        LMConfig::default()
    }

    #[test]
    fn doc_slot_holds_left_padded_document() {
        let c = cfg();
        let r = render_instruction(&c, &tokenize(&c, "x"), &tokenize(&c, "y")).unwrap();
        assert_eq!(r.doc_span, 0..32);
        let slot = r.tokens.slice(0..32);
        assert!(slot.ids()[..31].iter().all(|&id| id == c.pad_id));
        assert_eq!(slot.ids()[31], b'x' as usize);
        assert_eq!(r.query_span.start, 32);
    }

    #[test]
    fn answer_position_is_last_and_choices_are_single_ids() {
        let c = cfg();
        let r = render_instruction(&c, &tokenize(&c, "doc"), &tokenize(&c, "query")).unwrap();
        assert_eq!(r.answer_position, r.len() - 1);
        let t_count = r.tokens.ids().iter().filter(|&&id| id == c.true_id).count();
        let f_count = r.tokens.ids().iter().filter(|&&id| id == c.false_id).count();
        assert_eq!((t_count, f_count), (1, 1));
        // Last token is the closing period.
        assert_eq!(*r.tokens.ids().last().unwrap(), b'.' as usize);
    }

    #[test]
    fn same_doc_different_queries_share_doc_span() {
        let c = cfg();
        let d = tokenize(&c, "shared doc");
        let r1 = render_instruction(&c, &d, &tokenize(&c, "first query")).unwrap();
        let r2 = render_instruction(&c, &d, &tokenize(&c, "second, longer query")).unwrap();
        assert_eq!(r1.tokens.slice(0..32), r2.tokens.slice(0..32));
    }

    #[test]
    fn same_query_different_docs_share_query_block() {
        let c = cfg();
        let q = tokenize(&c, "the query");
        let r1 = render_instruction(&c, &tokenize(&c, "doc one"), &q).unwrap();
        let r2 = render_instruction(&c, &tokenize(&c, "another doc"), &q).unwrap();
        assert_eq!(r1.query_tokens(), r2.query_tokens());
        assert_eq!(r1.query_tokens(), render_query_block(&c, &q));
    }

    #[test]
    fn overlong_query_is_right_truncated() {
        let c = cfg();
        let q = tokenize(&c, &"q".repeat(300));
        let r = render_instruction(&c, &tokenize(&c, "d"), &q).unwrap();
        assert!(r.len() <= c.max_window);
        assert_eq!(r.answer_position, r.len() - 1);
    }

    #[test]
    fn sft_dataset_counts_labels() {
        let c = cfg();
        let ds = synth_task(&SynthRule::default(), 10, 2, 2).unwrap();
        let examples = build_sft_dataset(&c, &ds, Split::Train).unwrap();
        assert_eq!(examples.len(), 10 * 8);
        let positives = examples.iter().filter(|e| e.label == c.true_id).count();
        assert_eq!(positives, 10);
        assert!(examples.iter().all(|e| e.label == c.true_id || e.label == c.false_id));
    }

    #[test]
    fn single_doc_pool_yields_single_positive_example() {
        use crate::datagen::{DocRec, QueryRec, RetrievalDataset};
        use std::collections::{BTreeMap, BTreeSet};
        let c = cfg();
        let ds = RetrievalDataset {
            pool: vec![DocRec { id: "d0".into(), text: "only".into() }],
            queries: vec![QueryRec { id: "q0".into(), text: "q".into(), split: Split::Train }],
            positives: BTreeMap::from([(
                "q0".to_string(),
                BTreeSet::from(["d0".to_string()]),
            )]),
        };
        let examples = build_sft_dataset(&c, &ds, Split::Train).unwrap();
        assert_eq!(examples.len(), 1);
        assert_eq!(examples[0].label, c.true_id);
    }

    #[test]
    fn template_hash_tracks_reserved_ids() {
        let c = cfg();
        let other = LMConfig { true_id: 3, ..c.clone() };
        assert_ne!(template_hash(&c), template_hash(&other));
        assert_eq!(template_hash(&c), template_hash(&c.clone()));
    }
}
