//! The toy decoder-only causal transformer shared by teacher and student:
//! byte-level tokenizer, left-padded document slots, the encoder itself, and
//! the checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod model;
pub mod tokenizer;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, params_hash, save_checkpoint,
    Checkpoint,
};
pub use config::LMConfig;
pub use model::{
    encode, head_group_names, init_params, lm_head, HiddenStates, LmGraph, LN_EPS,
};
pub use tokenizer::{detokenize, pad_document, tokenize, TokenSeq};
