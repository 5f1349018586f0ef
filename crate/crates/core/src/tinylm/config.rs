//! Model shape and the reserved-token contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the toy causal language model.
///
/// `l_d_max` is the fixed left-padded document slot width: every rendered
/// (document, query) sequence places the document in positions
/// `[0, l_d_max)`, which is what lets document hidden states be cached
/// offline and reused verbatim (see the causal prefix identity tested in
/// `tinylm::model`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LMConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    /// Maximum sequence length including the position offset.
    pub max_window: usize,
    /// Width of the left-padded document slot.
    pub l_d_max: usize,
    pub pad_id: usize,
    pub true_id: usize,
    pub false_id: usize,
}

impl Default for LMConfig {
    fn default() -> Self {
        LMConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            vocab_size: 256,
            max_window: 256,
            l_d_max: 32,
            pad_id: 0,
            true_id: 1,
            false_id: 2,
        }
    }
}

impl LMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return Err(Error::validation("d_model, n_layers, n_heads must be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::validation(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 || self.vocab_size > 256 {
            return Err(Error::validation("vocab_size must be in 1..=256 (byte-level)"));
        }
        let specials = [self.pad_id, self.true_id, self.false_id];
        if specials.iter().any(|&id| id >= self.vocab_size) {
            return Err(Error::validation("reserved token ids must be < vocab_size"));
        }
        if specials[0] == specials[1] || specials[0] == specials[2] || specials[1] == specials[2] {
            return Err(Error::validation("reserved token ids must be distinct"));
        }
        if self.l_d_max >= self.max_window {
            return Err(Error::validation("l_d_max must be smaller than max_window"));
        }
        Ok(())
    }

    pub fn is_special(&self, id: usize) -> bool {
        id == self.pad_id || id == self.true_id || id == self.false_id
    }
}
