//! The decoder-only causal transformer: initialization and forward passes.
//!
//! There is exactly one forward implementation, written against the autodiff
//! tape. Inference binds every parameter as a constant leaf, in which case the
//! tape records values but no backward closures — so training and inference
//! passes run the identical kernel sequence and agree bitwise. That equality
//! underwrites the offline document cache: states computed once per document
//! must be interchangeable with states from any later joint pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::{ParamSet, Real, Tape, Tensor, Var};
use crate::tinylm::config::LMConfig;
use crate::tinylm::tokenizer::TokenSeq;

/// Layer-norm epsilon used throughout the model.
pub const LN_EPS: f64 = 1e-5;

/// Final-layer hidden states for one encoded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates<T: Real> {
    /// [sequence length, d_model].
    pub states: Tensor<T>,
    /// Base index used for positional embedding lookup.
    pub position_offset: usize,
}

impl<T: Real> HiddenStates<T> {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Last-position state vector (e.g. the document latent).
    pub fn last(&self) -> &[T] {
        self.states.row(self.states.rows() - 1)
    }
}

/// Fresh model parameters: token/positional embeddings, `n_layers` pre-norm
/// blocks (attention + 4× ReLU MLP), a final layer norm, and an untied
/// language-model head. Weights are N(0, 1/√fan_in); embeddings N(0, 0.1);
/// biases zero; norms identity. Draws are made in a fixed creation order
/// from a ChaCha8 stream, so a seed fully determines the parameters.
pub fn init_params<T: Real>(cfg: &LMConfig, seed: u64) -> Result<ParamSet<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_model;
    let h = 4 * d;
    let w_std = 1.0 / (d as f64).sqrt();
    let mut p = ParamSet::new();
    p.insert("tok_embed", Tensor::randn(&[cfg.vocab_size, d], 0.1, &mut rng));
    p.insert("pos_embed", Tensor::randn(&[cfg.max_window, d], 0.1, &mut rng));
    for layer in 0..cfg.n_layers {
        let pre = format!("layer{layer}");
        p.insert(&format!("{pre}.ln1.gamma"), Tensor::full(&[d], T::one()));
        p.insert(&format!("{pre}.ln1.beta"), Tensor::zeros(&[d]));
        for proj in ["wq", "wk", "wv", "wo"] {
            p.insert(&format!("{pre}.attn.{proj}"), Tensor::randn(&[d, d], w_std, &mut rng));
        }
        for proj in ["bq", "bk", "bv", "bo"] {
            p.insert(&format!("{pre}.attn.{proj}"), Tensor::zeros(&[d]));
        }
        p.insert(&format!("{pre}.ln2.gamma"), Tensor::full(&[d], T::one()));
        p.insert(&format!("{pre}.ln2.beta"), Tensor::zeros(&[d]));
        p.insert(&format!("{pre}.mlp.w1"), Tensor::randn(&[d, h], w_std, &mut rng));
        p.insert(&format!("{pre}.mlp.b1"), Tensor::zeros(&[h]));
        p.insert(
            &format!("{pre}.mlp.w2"),
            Tensor::randn(&[h, d], 1.0 / (h as f64).sqrt(), &mut rng),
        );
        p.insert(&format!("{pre}.mlp.b2"), Tensor::zeros(&[d]));
    }
    p.insert("final_ln.gamma", Tensor::full(&[d], T::one()));
    p.insert("final_ln.beta", Tensor::zeros(&[d]));
    p.insert("head.w", Tensor::randn(&[d, cfg.vocab_size], w_std, &mut rng));
    p.insert("head.b", Tensor::zeros(&[cfg.vocab_size]));
    Ok(p)
}

/// Names of the language-model head parameter groups.
pub fn head_group_names() -> [&'static str; 2] {
    ["head.w", "head.b"]
}

/// A forward-pass builder over one tape. For training, parameter leaves are
/// bound through [`ParamSet`] trainable flags (frozen groups enter as
/// constants); for inference every leaf is a constant. Leaves are cached, so
/// several encodes on one graph — a whole batch — share them and their
/// gradients accumulate.
pub struct LmGraph<'a, T: Real> {
    pub tape: Tape<T>,
    params: &'a ParamSet<T>,
    cfg: &'a LMConfig,
    train: bool,
    leaves: std::collections::BTreeMap<String, Var>,
}

impl<'a, T: Real> LmGraph<'a, T> {
    pub fn new(params: &'a ParamSet<T>, cfg: &'a LMConfig, train: bool) -> Self {
        LmGraph { tape: Tape::new(), params, cfg, train, leaves: Default::default() }
    }

    pub fn config(&self) -> &LMConfig {
        self.cfg
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.tape.value(v)
    }

    fn leaf(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.leaves.get(name) {
            return Ok(v);
        }
        let v = if self.train {
            self.tape.param(self.params, name)?
        } else {
            self.tape.constant(self.params.get(name)?.clone())
        };
        self.leaves.insert(name.to_string(), v);
        Ok(v)
    }

    /// Encode a token sequence; returns the [len, d] final-layer states.
    ///
    /// `position_offset` shifts the positional lookup, letting a standalone
    /// query occupy the same positions it would hold after a document slot.
    pub fn encode(&mut self, tokens: &TokenSeq, position_offset: usize) -> Result<Var> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::structural("encode of empty sequence"));
        }
        if position_offset + n > self.cfg.max_window {
            return Err(Error::structural(format!(
                "sequence of {n} tokens at offset {position_offset} exceeds window {}",
                self.cfg.max_window
            )));
        }
        let pos_ids: Vec<usize> = (position_offset..position_offset + n).collect();
        let tok_tab = self.leaf("tok_embed")?;
        let pos_tab = self.leaf("pos_embed")?;
        let tok = self.tape.embed(tok_tab, tokens.ids())?;
        let pos = self.tape.embed(pos_tab, &pos_ids)?;
        let mut x = self.tape.add(tok, pos)?;
        for layer in 0..self.cfg.n_layers {
            let pre = format!("layer{layer}");
            let g1 = self.leaf(&format!("{pre}.ln1.gamma"))?;
            let b1 = self.leaf(&format!("{pre}.ln1.beta"))?;
            let normed = self.tape.layer_norm(x, g1, b1, LN_EPS)?;
            let wq = self.leaf(&format!("{pre}.attn.wq"))?;
            let bq = self.leaf(&format!("{pre}.attn.bq"))?;
            let wk = self.leaf(&format!("{pre}.attn.wk"))?;
            let bk = self.leaf(&format!("{pre}.attn.bk"))?;
            let wv = self.leaf(&format!("{pre}.attn.wv"))?;
            let bv = self.leaf(&format!("{pre}.attn.bv"))?;
            let wo = self.leaf(&format!("{pre}.attn.wo"))?;
            let bo = self.leaf(&format!("{pre}.attn.bo"))?;
            let q = self.tape.linear(normed, wq, bq)?;
            let k = self.tape.linear(normed, wk, bk)?;
            let v = self.tape.linear(normed, wv, bv)?;
            let mixed = self.tape.causal_attention(q, k, v, self.cfg.n_heads, tokens.mask())?;
            let proj = self.tape.linear(mixed, wo, bo)?;
            x = self.tape.add(x, proj)?;

            let g2 = self.leaf(&format!("{pre}.ln2.gamma"))?;
            let b2 = self.leaf(&format!("{pre}.ln2.beta"))?;
            let normed = self.tape.layer_norm(x, g2, b2, LN_EPS)?;
            let w1 = self.leaf(&format!("{pre}.mlp.w1"))?;
            let b1m = self.leaf(&format!("{pre}.mlp.b1"))?;
            let w2 = self.leaf(&format!("{pre}.mlp.w2"))?;
            let b2m = self.leaf(&format!("{pre}.mlp.b2"))?;
            let hidden = self.tape.linear(normed, w1, b1m)?;
            let hidden = self.tape.relu(hidden);
            let out = self.tape.linear(hidden, w2, b2m)?;
            x = self.tape.add(x, out)?;
        }
        let gf = self.leaf("final_ln.gamma")?;
        let bf = self.leaf("final_ln.beta")?;
        self.tape.layer_norm(x, gf, bf, LN_EPS)
    }

    /// Apply the LM head to every position of `states`: [n, d] → [n, V].
    pub fn lm_head(&mut self, states: Var) -> Result<Var> {
        let w = self.leaf("head.w")?;
        let b = self.leaf("head.b")?;
        self.tape.linear(states, w, b)
    }

    /// Apply the LM head to a single position: [1, V] logits.
    pub fn lm_head_at(&mut self, states: Var, row: usize) -> Result<Var> {
        let sliced = self.tape.slice_rows(states, row..row + 1)?;
        self.lm_head(sliced)
    }
}

/// Inference-only encode: runs the shared forward path with constant leaves
/// and returns the final-layer states.
pub fn encode<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    tokens: &TokenSeq,
    position_offset: usize,
) -> Result<HiddenStates<T>> {
    let mut graph = LmGraph::new(params, cfg, false);
    let v = graph.encode(tokens, position_offset)?;
    let states = graph.value(v).clone();
    states.ensure_finite("encode output")?;
    Ok(HiddenStates { states, position_offset })
}

/// Inference-only LM head over raw states: [n, d] → [n, V] logits.
pub fn lm_head<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    states: &Tensor<T>,
) -> Result<Tensor<T>> {
    if states.cols() != cfg.d_model {
        return Err(Error::structural(format!(
            "lm_head: states width {} does not match d_model {}",
            states.cols(),
            cfg.d_model
        )));
    }
    let w = params.get("head.w")?;
    let b = params.get("head.b")?;
    Ok(crate::numcore::kernels::linear_fwd(states, w, b))
}
