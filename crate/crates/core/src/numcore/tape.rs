//! Reverse-mode automatic differentiation over a Wengert tape.
//!
//! A [`Tape`] records each op as a node holding the forward value plus a
//! one-shot backward closure that maps the node's output gradient to its
//! parents' gradients. Gradient need is tracked per node: subgraphs fed only
//! by constants (e.g. a frozen backbone's states during predictor training)
//! record no closures and cost nothing at backward time.
//!
//! Forward values are produced by the kernels in [`crate::numcore::kernels`],
//! shared with the inference path, so recorded and unrecorded forward passes
//! agree bitwise.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numcore::kernels;
use crate::numcore::optim::{GradRecord, ParamSet};
use crate::numcore::tensor::{clamped_ln, real, softmax_in_place, Real, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn<T> = Box<dyn FnOnce(&Tensor<T>) -> Vec<(Var, Tensor<T>)>>;

struct Node<T: Real> {
    value: Tensor<T>,
    requires_grad: bool,
    /// Parameter-group name if this node is a trainable leaf.
    param: Option<String>,
    back: Option<BackFn<T>>,
}

/// Recording of one forward computation, consumed by [`Tape::backward`].
#[derive(Default)]
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, node: Node<T>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Node { value, requires_grad: false, param: None, back: None })
    }

    /// Leaf bound to a named parameter group. Trainable groups participate in
    /// backward and surface in the [`GradRecord`]; frozen groups enter as
    /// constants, which is what keeps them provably untouched by training.
    pub fn param(&mut self, params: &ParamSet<T>, name: &str) -> Result<Var> {
        let tensor = params.get(name)?.clone();
        let trainable = params.is_trainable(name);
        Ok(self.push(Node {
            value: tensor,
            requires_grad: trainable,
            param: trainable.then(|| name.to_string()),
            back: None,
        }))
    }

    /// Interior node helper: output needs gradient iff any parent does, and
    /// the closure is recorded only in that case.
    fn op(
        &mut self,
        value: Tensor<T>,
        parents: &[Var],
        back: impl FnOnce(&Tensor<T>) -> Vec<(Var, Tensor<T>)> + 'static,
    ) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Node {
            value,
            requires_grad,
            param: None,
            back: requires_grad.then(|| Box::new(back) as BackFn<T>),
        })
    }

    // ---- ops ----

    /// Row gather from an embedding table (token or positional lookup).
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tab = self.value(table);
        let (rows, d) = (tab.rows(), tab.cols());
        if let Some(&bad) = ids.iter().find(|&&id| id >= rows) {
            return Err(Error::Index(format!("embed id {bad} out of table rows {rows}")));
        }
        let value = kernels::embed_rows(tab, ids);
        let ids = ids.to_vec();
        Ok(self.op(value, &[table], move |g| {
            let mut dt = Tensor::zeros(&[rows, d]);
            for (i, &id) in ids.iter().enumerate() {
                let gr = g.row(i).to_vec();
                let tr = dt.row_mut(id);
                for j in 0..d {
                    tr[j] += gr[j];
                }
            }
            vec![(table, dt)]
        }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.op(value, &[a, b], move |g| vec![(a, g.clone()), (b, g.clone())]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = kernels::relu_fwd(self.value(x));
        let active: Vec<bool> = self.value(x).data().iter().map(|&v| v > T::zero()).collect();
        self.op(value, &[x], move |g| {
            let mut dx = g.clone();
            for (v, &on) in dx.data_mut().iter_mut().zip(&active) {
                if !on {
                    *v = T::zero();
                }
            }
            vec![(x, dx)]
        })
    }

    /// `x @ w + b` with `x` [N, d_in], `w` [d_in, d_out], `b` [d_out].
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (d_in, d_out) = (wv.rows(), wv.cols());
        if xv.cols() != d_in || bv.len() != d_out {
            return Err(Error::structural(format!(
                "linear: x {:?} w {:?} b {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let value = kernels::linear_fwd(xv, wv, bv);
        let (xc, wc) = (xv.clone(), wv.clone());
        Ok(self.op(value, &[x, w, b], move |g| {
            let n = xc.rows();
            let mut dx = Tensor::zeros(&[n, d_in]);
            let mut dw = Tensor::zeros(&[d_in, d_out]);
            let mut db = Tensor::zeros(&[d_out]);
            for i in 0..n {
                let gi = g.row(i);
                let xi = xc.row(i);
                for kk in 0..d_in {
                    let wrow = wc.row(kk);
                    let mut acc = T::zero();
                    for j in 0..d_out {
                        acc += gi[j] * wrow[j];
                        dw.row_mut(kk)[j] += xi[kk] * gi[j];
                    }
                    dx.row_mut(i)[kk] = acc;
                }
                for j in 0..d_out {
                    db.data_mut()[j] += gi[j];
                }
            }
            vec![(x, dx), (w, dw), (b, db)]
        }))
    }

    /// Row-wise layer normalization with learned scale/shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols();
        if gv.len() != d || bv.len() != d {
            return Err(Error::structural(format!(
                "layer_norm: x {:?} gamma {:?} beta {:?}",
                xv.shape(),
                gv.shape(),
                bv.shape()
            )));
        }
        let (value, xhat, inv_std) = kernels::layer_norm_fwd(xv, gv, bv, eps);
        let gc = gv.clone();
        let xhat_b = xhat;
        Ok(self.op(value, &[x, gamma, beta], move |g| {
            let n = g.rows();
            let dn = real::<T>(d as f64);
            let mut dx = Tensor::zeros(&[n, d]);
            let mut dgamma = Tensor::zeros(&[d]);
            let mut dbeta = Tensor::zeros(&[d]);
            for i in 0..n {
                let gi = g.row(i);
                let hi = xhat_b.row(i);
                // Accumulate the two row sums the layer-norm backward needs.
                let mut sum_dh = T::zero();
                let mut sum_dh_h = T::zero();
                for j in 0..d {
                    let dh = gi[j] * gc.data()[j];
                    sum_dh += dh;
                    sum_dh_h += dh * hi[j];
                    dgamma.data_mut()[j] += gi[j] * hi[j];
                    dbeta.data_mut()[j] += gi[j];
                }
                let istd = inv_std[i];
                for j in 0..d {
                    let dh = gi[j] * gc.data()[j];
                    dx.row_mut(i)[j] = istd * (dh - sum_dh / dn - hi[j] * sum_dh_h / dn);
                }
            }
            vec![(x, dx), (gamma, dgamma), (beta, dbeta)]
        }))
    }

    /// Multi-head causal self-attention over projected q/k/v (see
    /// [`kernels::attn_allowed`] for the masking rule).
    pub fn causal_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        n_heads: usize,
        key_mask: &[bool],
    ) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = (qv.rows(), qv.cols());
        if kv.shape() != qv.shape() || vv.shape() != qv.shape() {
            return Err(Error::structural("attention: q/k/v shapes differ"));
        }
        if d % n_heads != 0 {
            return Err(Error::structural(format!("attention: d={d} not divisible by {n_heads}")));
        }
        if key_mask.len() != n {
            return Err(Error::structural("attention: key mask length mismatch"));
        }
        let (value, probs) = kernels::attention_fwd(qv, kv, vv, n_heads, key_mask);
        let (qc, kc, vc) = (qv.clone(), kv.clone(), vv.clone());
        let dh = d / n_heads;
        let scale = real::<T>(1.0 / (dh as f64).sqrt());
        Ok(self.op(value, &[q, k, v], move |g| {
            let mut dq = Tensor::zeros(&[n, d]);
            let mut dk = Tensor::zeros(&[n, d]);
            let mut dv = Tensor::zeros(&[n, d]);
            for h in 0..n_heads {
                let lo = h * dh;
                let prow = probs.row(h);
                for i in 0..n {
                    let gi = &g.row(i)[lo..lo + dh];
                    // dp_ij = g_i · v_j ; softmax backward gives
                    // ds_ij = p_ij (dp_ij − Σ_j' p_ij' dp_ij').
                    let mut dp = vec![T::zero(); i + 1];
                    let mut dot_pg = T::zero();
                    for (j, dpj) in dp.iter_mut().enumerate() {
                        let p = prow[i * n + j];
                        if p != T::zero() {
                            let vj = &vc.row(j)[lo..lo + dh];
                            let mut acc = T::zero();
                            for t in 0..dh {
                                acc += gi[t] * vj[t];
                            }
                            *dpj = acc;
                            dot_pg += p * acc;
                        }
                    }
                    for (j, &dpj) in dp.iter().enumerate() {
                        let p = prow[i * n + j];
                        if p == T::zero() {
                            continue;
                        }
                        let ds = p * (dpj - dot_pg) * scale;
                        let qi = &qc.row(i)[lo..lo + dh];
                        let kj = &kc.row(j)[lo..lo + dh];
                        for t in 0..dh {
                            dq.row_mut(i)[lo + t] += ds * kj[t];
                            dk.row_mut(j)[lo + t] += ds * qi[t];
                            dv.row_mut(j)[lo + t] += p * gi[t];
                        }
                    }
                }
            }
            vec![(q, dq), (k, dk), (v, dv)]
        }))
    }

    /// Copy of rows `range`; gradient scatters back into the source rows.
    pub fn slice_rows(&mut self, x: Var, range: Range<usize>) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.cols());
        if range.end > n || range.start > range.end {
            return Err(Error::Index(format!("slice_rows {range:?} of {n} rows")));
        }
        let value = xv.slice_rows(range.clone());
        Ok(self.op(value, &[x], move |g| {
            let mut dx = Tensor::zeros(&[n, d]);
            for (i, src) in (range.start..range.end).zip(0..) {
                dx.row_mut(i).copy_from_slice(g.row(src));
            }
            vec![(x, dx)]
        }))
    }

    /// Multiply every row of `x` elementwise by the fixed vector `z`.
    pub fn mul_rows_const(&mut self, x: Var, z: &Tensor<T>) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        if z.len() != d {
            return Err(Error::structural(format!("mul_rows_const: width {} vs {}", z.len(), d)));
        }
        let mut value = xv.clone();
        for i in 0..value.rows() {
            for j in 0..d {
                value.row_mut(i)[j] *= z.data()[j];
            }
        }
        let zc = z.clone();
        Ok(self.op(value, &[x], move |g| {
            let mut dx = g.clone();
            for i in 0..dx.rows() {
                for j in 0..d {
                    dx.row_mut(i)[j] *= zc.data()[j];
                }
            }
            vec![(x, dx)]
        }))
    }

    /// `−log softmax(logits)[target]` over a single logit row.
    pub fn cross_entropy_logits(&mut self, logits: Var, target: usize) -> Result<Var> {
        let row = self.value(logits);
        let vlen = row.len();
        if target >= vlen {
            return Err(Error::Index(format!("target {target} out of vocab {vlen}")));
        }
        let mut p = row.clone();
        softmax_in_place(p.data_mut());
        let loss = -clamped_ln(p.data()[target]);
        Ok(self.op(Tensor::scalar(loss), &[logits], move |g| {
            let gs = g.scalar_value();
            let mut dl = p;
            dl.data_mut()[target] -= T::one();
            vec![(logits, dl.scale(gs))]
        }))
    }

    /// Reverse KL `Σ p_s (log p_s − log p_t)` where `p_s = softmax(logits)`
    /// and the teacher distribution is constant. Gradient w.r.t. logits:
    /// `p_j (log p_j − log t_j − L)`.
    pub fn reverse_kl_logits(&mut self, logits: Var, teacher: &Tensor<T>) -> Result<Var> {
        let row = self.value(logits);
        if teacher.len() != row.len() {
            return Err(Error::structural("reverse_kl: vocab size mismatch"));
        }
        let mut p = row.clone();
        softmax_in_place(p.data_mut());
        let logt: Vec<T> = teacher.data().iter().map(|&t| clamped_ln(t)).collect();
        let mut loss = T::zero();
        let mut diff = vec![T::zero(); p.len()];
        for j in 0..p.len() {
            let pj = p.data()[j];
            if pj > T::zero() {
                diff[j] = clamped_ln(pj) - logt[j];
                loss += pj * diff[j];
            }
        }
        Ok(self.op(Tensor::scalar(loss), &[logits], move |g| {
            let gs = g.scalar_value();
            let mut dl = p;
            for j in 0..dl.len() {
                let pj = dl.data()[j];
                dl.data_mut()[j] = gs * pj * (diff[j] - loss);
            }
            vec![(logits, dl)]
        }))
    }

    /// Forward KL `Σ p_t (log p_t − log p_s)` with constant teacher.
    /// Gradient w.r.t. logits is simply `p_s − p_t`.
    pub fn forward_kl_logits(&mut self, logits: Var, teacher: &Tensor<T>) -> Result<Var> {
        let row = self.value(logits);
        if teacher.len() != row.len() {
            return Err(Error::structural("forward_kl: vocab size mismatch"));
        }
        let mut p = row.clone();
        softmax_in_place(p.data_mut());
        let mut loss = T::zero();
        for j in 0..p.len() {
            let t = teacher.data()[j];
            if t > T::zero() {
                loss += t * (clamped_ln(t) - clamped_ln(p.data()[j]));
            }
        }
        let tc = teacher.clone();
        Ok(self.op(Tensor::scalar(loss), &[logits], move |g| {
            let gs = g.scalar_value();
            let mut dl = p;
            for j in 0..dl.len() {
                dl.data_mut()[j] = gs * (dl.data()[j] - tc.data()[j]);
            }
            vec![(logits, dl)]
        }))
    }

    /// Mean squared error of `x` against a fixed target of the same shape.
    pub fn mse_const(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        let xv = self.value(x);
        xv.check_same_shape(target, "mse_const")?;
        let n = real::<T>(xv.len() as f64);
        let mut loss = T::zero();
        for (&a, &b) in xv.data().iter().zip(target.data()) {
            let c = a - b;
            loss += c * c;
        }
        loss = loss / n;
        let diff = xv.sub(target)?;
        Ok(self.op(Tensor::scalar(loss), &[x], move |g| {
            let c = g.scalar_value() * real::<T>(2.0) / n;
            vec![(x, diff.scale(c))]
        }))
    }

    /// Scalar combination `a + w·b`.
    pub fn add_scaled(&mut self, a: Var, b: Var, w: f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.is_scalar() || !bv.is_scalar() {
            return Err(Error::structural("add_scaled expects scalars"));
        }
        let wv = real::<T>(w);
        let value = Tensor::scalar(av.scalar_value() + wv * bv.scalar_value());
        Ok(self.op(value, &[a, b], move |g| {
            vec![(a, g.clone()), (b, g.scale(wv))]
        }))
    }

    /// Mean of a list of scalars (batch-loss reduction).
    pub fn mean_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::structural("mean_scalars over empty list"));
        }
        let n = real::<T>(xs.len() as f64);
        let mut acc = T::zero();
        for &x in xs {
            let v = self.value(x);
            if !v.is_scalar() {
                return Err(Error::structural("mean_scalars expects scalars"));
            }
            acc += v.scalar_value();
        }
        let xs = xs.to_vec();
        Ok(self.op(Tensor::scalar(acc / n), &xs.clone(), move |g| {
            let share = Tensor::scalar(g.scalar_value() / n);
            xs.iter().map(|&x| (x, share.clone())).collect()
        }))
    }

    /// Run the backward sweep from scalar `loss`, consuming the tape.
    /// Returns gradients for every trainable parameter leaf reached.
    pub fn backward(mut self, loss: Var) -> Result<GradRecord<T>> {
        let node = &self.nodes[loss.0];
        if !node.value.is_scalar() {
            return Err(Error::structural("backward root must be a scalar"));
        }
        if !node.requires_grad {
            return Err(Error::structural(
                "backward root does not depend on any trainable parameter",
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut record = GradRecord::new();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            g.ensure_finite("backward gradient")?;
            let node = &mut self.nodes[idx];
            if let Some(name) = node.param.take() {
                record.accumulate(&name, g)?;
                continue;
            }
            let Some(back) = node.back.take() else { continue };
            for (parent, pg) in back(&g) {
                debug_assert!(parent.0 < idx, "tape order violated");
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(record)
    }
}
