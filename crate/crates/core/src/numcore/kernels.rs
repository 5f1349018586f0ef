//! Shared forward kernels.
//!
//! Both execution paths — plain inference and tape-recorded training — call
//! these exact functions in the same order, so their outputs agree bitwise at
//! a given precision. That equality is load-bearing: the document cache is
//! built by the inference path and must slot seamlessly into scores computed
//! against states from the training path.

use crate::numcore::tensor::{real, softmax_in_place, Real, Tensor};

/// Gather rows of `table` ([R, d]) at `ids`, producing [len(ids), d].
pub fn embed_rows<T: Real>(table: &Tensor<T>, ids: &[usize]) -> Tensor<T> {
    let d = table.cols();
    let mut data = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        data.extend_from_slice(table.row(id));
    }
    Tensor::new(vec![ids.len(), d], data).expect("gather shape")
}

/// Row-wise layer norm: `y = gamma ⊙ (x − mean)/sqrt(var + eps) + beta`.
///
/// Returns `(y, xhat, inv_std)`; the latter two feed the backward pass and
/// are simply dropped on the inference path.
pub fn layer_norm_fwd<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let (n, d) = (x.rows(), x.cols());
    let dn = real::<T>(d as f64);
    let eps = real::<T>(eps);
    let mut y = Tensor::zeros(&[n, d]);
    let mut xhat = Tensor::zeros(&[n, d]);
    let mut inv_std = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mut mean = T::zero();
        for &v in row {
            mean += v;
        }
        mean = mean / dn;
        let mut var = T::zero();
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var = var / dn;
        let istd = T::one() / (var + eps).sqrt();
        inv_std.push(istd);
        for j in 0..d {
            let h = (row[j] - mean) * istd;
            xhat.row_mut(i)[j] = h;
            y.row_mut(i)[j] = gamma.data()[j] * h + beta.data()[j];
        }
    }
    (y, xhat, inv_std)
}

/// Affine map `x @ w + b` with `x` [N, d_in], `w` [d_in, d_out], `b` [d_out].
pub fn linear_fwd<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, d_in) = (x.rows(), x.cols());
    let d_out = w.cols();
    let mut out = Tensor::zeros(&[n, d_out]);
    for i in 0..n {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        oi.copy_from_slice(b.data());
        for (kk, &xv) in xi.iter().enumerate().take(d_in) {
            let wrow = w.row(kk);
            for j in 0..d_out {
                oi[j] += xv * wrow[j];
            }
        }
    }
    out
}

pub fn relu_fwd<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Key-visibility rule for causal self-attention over a possibly padded
/// sequence: position `i` may attend to `j` iff `j ≤ i` and `j` is either a
/// real (non-PAD) token or `i` itself. The self-exception keeps every softmax
/// row nonempty even when the entire visible prefix is padding.
#[inline]
pub fn attn_allowed(i: usize, j: usize, key_mask: &[bool]) -> bool {
    j <= i && (key_mask[j] || j == i)
}

/// Multi-head causal self-attention core over projected `q`/`k`/`v` ([N, d]).
///
/// Returns the merged head outputs [N, d] and the attention probabilities
/// [n_heads, N, N] (zero on masked pairs) for the backward pass.
pub fn attention_fwd<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    n_heads: usize,
    key_mask: &[bool],
) -> (Tensor<T>, Tensor<T>) {
    let (n, d) = (q.rows(), q.cols());
    let dh = d / n_heads;
    let scale = real::<T>(1.0 / (dh as f64).sqrt());
    let mut out = Tensor::zeros(&[n, d]);
    let mut probs = Tensor::zeros(&[n_heads, n, n]);
    let mut scores = vec![T::zero(); n];
    for h in 0..n_heads {
        let lo = h * dh;
        for i in 0..n {
            let qi = &q.row(i)[lo..lo + dh];
            for j in 0..=i {
                scores[j] = if attn_allowed(i, j, key_mask) {
                    let kj = &k.row(j)[lo..lo + dh];
                    let mut dot = T::zero();
                    for t in 0..dh {
                        dot += qi[t] * kj[t];
                    }
                    dot * scale
                } else {
                    T::neg_infinity()
                };
            }
            softmax_in_place(&mut scores[..=i]);
            let prow = probs.row_mut(h);
            prow[i * n..i * n + i + 1].copy_from_slice(&scores[..=i]);
            let oi = out.row_mut(i);
            for j in 0..=i {
                let p = scores[j];
                if p != T::zero() {
                    let vj = &v.row(j)[lo..lo + dh];
                    for t in 0..dh {
                        oi[lo + t] += p * vj[t];
                    }
                }
            }
        }
    }
    (out, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_gathers_rows() {
        let table = Tensor::new(vec![3, 2], vec![0.0f64, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let out = embed_rows(&table, &[2, 0, 2]);
        assert_eq!(out.shape(), &[3, 2]);
        assert_eq!(out.data(), &[4.0, 5.0, 0.0, 1.0, 4.0, 5.0]);
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let x = Tensor::new(vec![1, 4], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let gamma = Tensor::full(&[4], 1.0);
        let beta = Tensor::zeros(&[4]);
        let (y, _, _) = layer_norm_fwd(&x, &gamma, &beta, 1e-5);
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-4); // eps shrinks variance slightly
    }

    #[test]
    fn linear_identity_weight() {
        let x = Tensor::new(vec![2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![10.0, 20.0]);
        let y = linear_fwd(&x, &w, &b);
        assert_eq!(y.data(), &[11.0, 22.0, 13.0, 24.0]);
    }

    #[test]
    fn attention_single_position_is_value_passthrough() {
        // One position attends only to itself: output = v.
        let q = Tensor::new(vec![1, 2], vec![0.3f64, -0.7]).unwrap();
        let k = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let v = Tensor::new(vec![1, 2], vec![5.0, -2.0]).unwrap();
        let (out, probs) = attention_fwd(&q, &k, &v, 1, &[true]);
        assert_eq!(out.data(), v.data());
        assert_eq!(probs.data(), &[1.0]);
    }

    #[test]
    fn attention_rows_are_causal() {
        // With uniform q/k the probabilities are uniform over the visible
        // prefix; position 1 must ignore position 2 entirely.
        let n = 3;
        let q = Tensor::full(&[n, 2], 1.0f64);
        let k = Tensor::full(&[n, 2], 1.0);
        let v = Tensor::new(vec![n, 2], vec![1.0, 0.0, 2.0, 0.0, 4.0, 0.0]).unwrap();
        let (out, _) = attention_fwd(&q, &k, &v, 1, &[true, true, true]);
        assert!((out.row(0)[0] - 1.0).abs() < 1e-12);
        assert!((out.row(1)[0] - 1.5).abs() < 1e-12);
        assert!((out.row(2)[0] - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn attention_pad_keys_are_invisible_to_later_positions() {
        let n = 3;
        let q = Tensor::full(&[n, 2], 1.0f64);
        let k = Tensor::full(&[n, 2], 1.0);
        let v = Tensor::new(vec![n, 2], vec![100.0, 0.0, 2.0, 0.0, 4.0, 0.0]).unwrap();
        // Position 0 is PAD: only itself sees it (self-exception).
        let (out, _) = attention_fwd(&q, &k, &v, 1, &[false, true, true]);
        assert!((out.row(0)[0] - 100.0).abs() < 1e-12); // self-attend fallback
        assert!((out.row(1)[0] - 2.0).abs() < 1e-12); // PAD excluded
        assert!((out.row(2)[0] - 3.0).abs() < 1e-12); // mean of v1, v2
    }
}
