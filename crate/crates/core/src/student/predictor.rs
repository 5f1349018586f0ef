//! The predictor mapping solo query states into the joint-encoding space.
//!
//! The bi-encoder gap is that a standalone query encoding has never seen the
//! document. The predictor closes it per document at O(1) cost: a small MLP
//! transforms each query-position state, and an elementwise product with the
//! cached document latent `z` injects the document identity. Only these MLP
//! weights are ever trained during distillation; backbone and head stay
//! frozen.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::kernels::{linear_fwd, relu_fwd};
use crate::numcore::{ParamSet, Real, Tensor};

/// Which query positions the predictor output is trained to match.
///
/// `Full` reconstructs the teacher's states over the whole query span;
/// `Last` only the final position (the one the answer head reads). Scoring
/// always uses the final position either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictSpan {
    #[default]
    Full,
    Last,
}

impl std::str::FromStr for PredictSpan {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PredictSpan::Full),
            "last" => Ok(PredictSpan::Last),
            other => {
                Err(Error::usage(format!("unknown predict span '{other}' (expected full | last)")))
            }
        }
    }
}

impl std::fmt::Display for PredictSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredictSpan::Full => "full",
            PredictSpan::Last => "last",
        })
    }
}

/// How the student forms predictions and scores at retrieval time. Must
/// match the configuration the predictor was distilled under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StudentConfig {
    pub predict_span: PredictSpan,
    /// When false the document latent multiplication is skipped — the
    /// ablation that removes the only document-dependent signal.
    #[serde(default = "default_true")]
    pub use_doc_mul: bool,
}

fn default_true() -> bool {
    true
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig { predict_span: PredictSpan::Full, use_doc_mul: true }
    }
}

impl StudentConfig {
    pub fn new() -> Self {
        StudentConfig::default()
    }
}

/// Group names of an `n_layers`-deep predictor, in application order.
pub fn predictor_group_names(n_layers: usize) -> Vec<String> {
    (0..n_layers).flat_map(|l| [format!("pred.{l}.w"), format!("pred.{l}.b")]).collect()
}

/// Number of linear layers in a predictor parameter set.
pub fn predictor_depth<T: Real>(theta: &ParamSet<T>) -> usize {
    (0..).take_while(|l| theta.contains(&format!("pred.{l}.w"))).count()
}

/// Initialize predictor weights: `n_layers` linear maps of width `d` with
/// ReLU between consecutive maps (2 layers by default elsewhere). Draws are
/// in creation order from a ChaCha8 stream, so `seed` fixes every value.
pub fn init_predictor<T: Real>(d: usize, n_layers: usize, seed: u64) -> Result<ParamSet<T>> {
    if d == 0 {
        return Err(Error::validation("predictor width must be positive"));
    }
    if n_layers == 0 {
        return Err(Error::validation("predictor needs at least one layer"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = 1.0 / (d as f64).sqrt();
    let mut theta = ParamSet::new();
    for l in 0..n_layers {
        theta.insert(&format!("pred.{l}.w"), Tensor::randn(&[d, d], std, &mut rng));
        theta.insert(&format!("pred.{l}.b"), Tensor::zeros(&[d]));
    }
    Ok(theta)
}

/// The MLP part of the predictor, applied token-wise: `[n, d] -> [n, d]`.
pub fn predictor_mlp<T: Real>(theta: &ParamSet<T>, states: &Tensor<T>) -> Result<Tensor<T>> {
    let depth = predictor_depth(theta);
    if depth == 0 {
        return Err(Error::structural("parameter set contains no predictor layers"));
    }
    let mut h = states.clone();
    for l in 0..depth {
        let w = theta.get(&format!("pred.{l}.w"))?;
        let b = theta.get(&format!("pred.{l}.b"))?;
        if h.cols() != w.rows() {
            return Err(Error::structural(format!(
                "predictor layer {l}: input width {} vs weight rows {}",
                h.cols(),
                w.rows()
            )));
        }
        h = linear_fwd(&h, w, b);
        if l + 1 < depth {
            h = relu_fwd(&h);
        }
    }
    Ok(h)
}

/// Full predictor: MLP over each query-position state, then row-wise
/// elementwise product with the document latent `z`.
pub fn predictor_forward<T: Real>(
    theta: &ParamSet<T>,
    query_states: &Tensor<T>,
    z: &Tensor<T>,
) -> Result<Tensor<T>> {
    let out = predictor_mlp(theta, query_states)?;
    if z.len() != out.cols() {
        return Err(Error::structural(format!(
            "latent width {} does not match predictor output width {}",
            z.len(),
            out.cols()
        )));
    }
    let zs = z.data().to_vec();
    let mut out = out;
    for i in 0..out.rows() {
        for (v, &zv) in out.row_mut(i).iter_mut().zip(&zs) {
            *v = *v * zv;
        }
    }
    Ok(out)
}
