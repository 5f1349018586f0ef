//! Distill a generative cross-encoding reranker into a bi-encoder retriever.
//!
//! A tiny decoder-only causal language model is fine-tuned to answer a binary
//! relevance question about a (document, query) pair — an accurate but slow
//! cross-encoder. A bi-encoder student then learns, via a lightweight
//! predictor conditioned on a cached document embedding, to reproduce the
//! teacher's query-side hidden states and answer distribution, so retrieval
//! needs only one query encoding plus O(1) work per candidate document.
//!
//! The crate is organized bottom-up:
//!
//! - [`numcore`] — tensors, reverse-mode autodiff, Adam, gradient checking
//! - [`tinylm`] — byte-level tokenizer, the causal transformer, checkpoints
//! - [`datagen`] — synthetic rationale-based retrieval tasks and JSONL ingest
//! - [`teacher`] — instruction rendering, SFT, pairwise relevance scoring
//! - [`student`] — document cache, solo query encoding, predictor, retrieval
//! - [`distill`] — the MSE + reverse-KL objective, training loop, ablations
//! - [`evalx`] — retrieval metrics, significance tests, complexity fits
//! - [`pipeline`] — run configuration and the command-level entry points
//!
//! Start with the `examples/` directory: each example is a runnable walk
//! through one capability (training the teacher, building the index,
//! distilling, benchmarking, significance testing), and together they cover
//! the whole pipeline end to end.

pub mod datagen;
pub mod distill;
pub mod error;
pub mod evalx;
pub mod numcore;
pub mod pipeline;
pub mod student;
pub mod teacher;
pub mod tinylm;

pub use error::{Error, Result};
