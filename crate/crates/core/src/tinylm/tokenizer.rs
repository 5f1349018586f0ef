//! Byte-level tokenizer with three reserved control ids.

use crate::error::{Error, Result};
use crate::tinylm::config::LMConfig;

/// Byte substituted for input bytes that would collide with a reserved id or
/// exceed a reduced vocabulary.
pub const REPLACEMENT_BYTE: u8 = b'?';

/// A token sequence paired with its attention mask (`false` on PAD).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    ids: Vec<usize>,
    mask: Vec<bool>,
}

impl TokenSeq {
    pub fn new(ids: Vec<usize>, mask: Vec<bool>, cfg: &LMConfig) -> Result<Self> {
        if ids.len() != mask.len() {
            return Err(Error::structural("token ids and mask lengths differ"));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
            return Err(Error::structural(format!(
                "token id {bad} out of vocab {}",
                cfg.vocab_size
            )));
        }
        Ok(TokenSeq { ids, mask })
    }

    pub fn empty() -> Self {
        TokenSeq { ids: Vec::new(), mask: Vec::new() }
    }

    /// All-real (unmasked) sequence from raw ids; used by template assembly
    /// where the ids are known valid.
    pub fn from_ids(ids: Vec<usize>) -> Self {
        let mask = vec![true; ids.len()];
        TokenSeq { ids, mask }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn concat(&self, other: &TokenSeq) -> TokenSeq {
        let mut ids = self.ids.clone();
        ids.extend_from_slice(&other.ids);
        let mut mask = self.mask.clone();
        mask.extend_from_slice(&other.mask);
        TokenSeq { ids, mask }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TokenSeq {
        TokenSeq { ids: self.ids[range.clone()].to_vec(), mask: self.mask[range].to_vec() }
    }

    pub fn push_special(&mut self, id: usize) {
        self.ids.push(id);
        self.mask.push(true);
    }
}

/// Map text to token ids, one per byte. Total over all strings: bytes that
/// would collide with a reserved id (or overflow a reduced vocabulary) are
/// replaced by `?`, so plain text can never emit PAD/⟨T⟩/⟨F⟩.
pub fn tokenize(cfg: &LMConfig, text: &str) -> TokenSeq {
    let ids = text
        .bytes()
        .map(|b| {
            let id = b as usize;
            if cfg.is_special(id) || id >= cfg.vocab_size {
                REPLACEMENT_BYTE as usize
            } else {
                id
            }
        })
        .collect();
    TokenSeq::from_ids(ids)
}

/// Inverse of [`tokenize`] for non-special ids; reserved ids render as
/// readable markers for logs and inspection.
pub fn detokenize(cfg: &LMConfig, ids: &[usize]) -> String {
    let mut out = String::new();
    for &id in ids {
        if id == cfg.pad_id {
            out.push_str("⟨PAD⟩");
        } else if id == cfg.true_id {
            out.push_str("⟨T⟩");
        } else if id == cfg.false_id {
            out.push_str("⟨F⟩");
        } else {
            out.push(id as u8 as char);
        }
    }
    out
}

/// Left-pad (or left-truncate) a document to exactly `l_d_max` tokens.
///
/// PAD tokens are prepended with mask `false`, so the slot's **last** position
/// always holds the document's final real token — the position later used as
/// the latent document vector. Overlong documents keep their rightmost
/// `l_d_max` tokens; both truncation and the degenerate empty document are
/// logged as warnings rather than errors.
pub fn pad_document(cfg: &LMConfig, doc: &TokenSeq) -> TokenSeq {
    let width = cfg.l_d_max;
    let doc = if doc.len() > width {
        log::warn!(
            "document of {} tokens truncated from the left to slot width {width}",
            doc.len()
        );
        doc.slice(doc.len() - width..doc.len())
    } else {
        doc.clone()
    };
    if doc.is_empty() {
        log::warn!("padding an empty document: slot is all PAD (degenerate)");
    }
    let n_pad = width - doc.len();
    let mut ids = vec![cfg.pad_id; n_pad];
    let mut mask = vec![false; n_pad];
    ids.extend_from_slice(doc.ids());
    mask.extend_from_slice(doc.mask());
    TokenSeq { ids, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> LMConfig {
        LMConfig::default()
    }

    #[test]
    fn empty_text_tokenizes_to_empty() {
        assert!(tokenize(&cfg(), "").is_empty());
    }

    #[test]
    fn ab_round_trips() {
        let c = cfg();
        let t = tokenize(&c, "ab");
        assert_eq!(t.ids(), &[b'a' as usize, b'b' as usize]);
        assert_eq!(detokenize(&c, t.ids()), "ab");
    }

    #[test]
    fn plain_text_never_emits_specials() {
        let c = cfg();
        // Control bytes 0x00-0x02 collide with PAD/⟨T⟩/⟨F⟩ and are replaced.
        let t = tokenize(&c, "\u{0}\u{1}\u{2}x");
        assert!(t.ids().iter().all(|&id| !c.is_special(id)));
        assert_eq!(detokenize(&c, t.ids()), "???x");
    }

    #[test]
    fn specials_render_as_markers() {
        let c = cfg();
        assert_eq!(detokenize(&c, &[c.pad_id, c.true_id, c.false_id]), "⟨PAD⟩⟨T⟩⟨F⟩");
    }

    #[test]
    fn pad_document_prepends_pads() {
        let c = cfg();
        let doc = tokenize(&c, "abc");
        let padded = pad_document(&c, &doc);
        assert_eq!(padded.len(), 32);
        assert!(padded.ids()[..29].iter().all(|&id| id == c.pad_id));
        assert!(padded.mask()[..29].iter().all(|&m| !m));
        assert_eq!(&padded.ids()[29..], tokenize(&c, "abc").ids());
        assert!(padded.mask()[29..].iter().all(|&m| m));
    }

    #[test]
    fn exact_width_document_is_unchanged() {
        let c = cfg();
        let doc = tokenize(&c, &"x".repeat(32));
        let padded = pad_document(&c, &doc);
        assert_eq!(&padded, &doc);
    }

    #[test]
    fn overlong_document_keeps_rightmost_tokens() {
        let c = cfg();
        let doc = tokenize(&c, &format!("{}{}", "a".repeat(10), "b".repeat(32)));
        let padded = pad_document(&c, &doc);
        assert_eq!(padded.len(), 32);
        assert!(padded.ids().iter().all(|&id| id == b'b' as usize));
    }

    #[test]
    fn empty_document_becomes_all_pad() {
        let c = cfg();
        let padded = pad_document(&c, &TokenSeq::empty());
        assert_eq!(padded.len(), 32);
        assert!(padded.ids().iter().all(|&id| id == c.pad_id));
        assert!(padded.mask().iter().all(|&m| !m));
    }

    #[test]
    fn token_seq_rejects_out_of_vocab() {
        let c = LMConfig { vocab_size: 128, ..cfg() };
        assert!(TokenSeq::new(vec![200], vec![true], &c).is_err());
    }

    proptest! {
        // Round-trip is exact for printable ASCII of any length.
        #[test]
        fn printable_ascii_round_trips(s in "[ -~]{0,100}") {
            let c = cfg();
            let t = tokenize(&c, &s);
            prop_assert_eq!(t.len(), s.len());
            prop_assert_eq!(detokenize(&c, t.ids()), s);
        }
    }
}
