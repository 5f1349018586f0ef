//! Named parameter collections, gradient records and the Adam update.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::tensor::{real, Real, Tensor};

/// One named parameter group: a tensor plus a trainable flag. Frozen groups
/// (e.g. a backbone during predictor training) are carried along for forward
/// passes but must never receive gradient.
#[derive(Debug, Clone)]
pub struct ParamGroup<T: Real> {
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Ordered map from group name to parameters. `BTreeMap` keeps iteration
/// order deterministic, which keeps optimizer traversal and checkpoint
/// serialization reproducible across runs.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<T: Real> {
    groups: BTreeMap<String, ParamGroup<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { groups: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) {
        self.groups.insert(name.to_string(), ParamGroup { tensor, trainable: true });
    }

    pub fn insert_frozen(&mut self, name: &str, tensor: Tensor<T>) {
        self.groups.insert(name.to_string(), ParamGroup { tensor, trainable: false });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.groups
            .get(name)
            .map(|g| &g.tensor)
            .ok_or_else(|| Error::structural(format!("unknown parameter group '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.groups
            .get_mut(name)
            .map(|g| &mut g.tensor)
            .ok_or_else(|| Error::structural(format!("unknown parameter group '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.groups.contains_key(name)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.groups.get(name).map(|g| g.trainable).unwrap_or(false)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let g = self
            .groups
            .get_mut(name)
            .ok_or_else(|| Error::structural(format!("unknown parameter group '{name}'")))?;
        g.trainable = trainable;
        Ok(())
    }

    pub fn freeze_all(&mut self) {
        for g in self.groups.values_mut() {
            g.trainable = false;
        }
    }

    pub fn any_trainable(&self) -> bool {
        self.groups.values().any(|g| g.trainable)
    }

    /// Deterministic (name-sorted) iteration over all groups.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamGroup<T>)> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.groups.values().map(|g| g.tensor.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        let groups = self
            .groups
            .iter()
            .map(|(k, g)| {
                (k.clone(), ParamGroup { tensor: g.tensor.cast::<U>(), trainable: g.trainable })
            })
            .collect();
        ParamSet { groups }
    }
}

/// Gradients keyed by parameter-group name, as produced by a backward pass.
/// Missing groups simply received no gradient (zero).
#[derive(Debug, Clone, Default)]
pub struct GradRecord<T: Real> {
    grads: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> GradRecord<T> {
    pub fn new() -> Self {
        GradRecord { grads: BTreeMap::new() }
    }

    /// Accumulate (sum) a gradient contribution for one group.
    pub fn accumulate(&mut self, name: &str, grad: Tensor<T>) -> Result<()> {
        match self.grads.get_mut(name) {
            Some(g) => g.add_assign(&grad)?,
            None => {
                self.grads.insert(name.to_string(), grad);
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Scale every gradient in place (e.g. 1/batch for mean reduction).
    pub fn scale(&mut self, c: T) {
        for g in self.grads.values_mut() {
            *g = g.scale(c);
        }
    }

    /// Merge another record into this one, summing overlaps.
    pub fn merge(&mut self, other: GradRecord<T>) -> Result<()> {
        for (name, grad) in other.grads {
            self.accumulate(&name, grad)?;
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, g) in &self.grads {
            g.ensure_finite(&format!("gradient of '{name}'"))?;
        }
        Ok(())
    }

    /// Global max |g| across all groups; used for divergence monitoring.
    pub fn max_abs(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.data().iter())
            .map(|v| v.abs().to_f64())
            .fold(0.0, f64::max)
    }
}

/// Adam hyperparameters. Defaults per the standard formulation:
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8, with bias correction.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second-moment state for one training run. Moment buffers are created
/// lazily the first time a group receives gradient.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub params: AdamParams,
    step: u64,
    m: BTreeMap<String, Tensor<T>>,
    v: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: AdamParams) -> Self {
        AdamState { params, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over `params` given `grads`.
    ///
    /// Only trainable groups are touched; a gradient for a frozen or unknown
    /// group is a structural error (it means the tape graph and the freeze
    /// mask disagree). Non-finite gradients are rejected before any state is
    /// modified, so a poisoned batch cannot corrupt the moments.
    pub fn apply(&mut self, params: &mut ParamSet<T>, grads: &GradRecord<T>) -> Result<()> {
        grads.ensure_finite()?;
        for (name, _) in grads.iter() {
            let group = params
                .groups
                .get(name)
                .ok_or_else(|| Error::structural(format!("gradient for unknown group '{name}'")))?;
            if !group.trainable {
                return Err(Error::structural(format!("gradient for frozen group '{name}'")));
            }
        }

        self.step += 1;
        let t = self.step as f64;
        let b1 = real::<T>(self.params.beta1);
        let b2 = real::<T>(self.params.beta2);
        let one = T::one();
        // Bias-corrected step size folded into a single scalar.
        let corr = self.params.lr * (1.0 - self.params.beta2.powf(t)).sqrt()
            / (1.0 - self.params.beta1.powf(t));
        let corr = real::<T>(corr);
        let eps = real::<T>(self.params.eps);

        for (name, grad) in grads.iter() {
            let group = self.m.entry(name.to_string()).or_insert_with(|| {
                Tensor::zeros(grad.shape())
            });
            group.check_same_shape(grad, "adam m")?;
            let vbuf = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let theta = params.get_mut(name)?;
            theta.check_same_shape(grad, "adam theta")?;

            let m = group.data_mut();
            let v = vbuf.data_mut();
            let th = theta.data_mut();
            for i in 0..grad.len() {
                let g = grad.data()[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                th[i] = th[i] - corr * m[i] / (v[i].sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of the Adam update; see [`AdamState::apply`].
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &GradRecord<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    state.apply(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: Vec<f64>) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(v));
        p
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut p = one_param(vec![1.0, -2.0, 3.0]);
        let before = p.get("w").unwrap().clone();
        let mut adam = AdamState::new(AdamParams::with_lr(0.1));
        let mut g = GradRecord::new();
        g.accumulate("w", Tensor::from_vec(vec![0.0, 0.0, 0.0])).unwrap();
        adam.apply(&mut p, &g).unwrap();
        // With g = 0, m = v = 0 and the update is exactly zero.
        assert_eq!(p.get("w").unwrap(), &before);
    }

    #[test]
    fn first_step_moves_by_approximately_lr() {
        // Bias correction makes m_hat = g, v_hat = g^2, so the first step is
        // lr * g / (|g| + eps') ~= lr * sign(g).
        let lr = 0.05;
        let mut p = one_param(vec![1.0]);
        let mut adam = AdamState::new(AdamParams::with_lr(lr));
        let mut g = GradRecord::new();
        g.accumulate("w", Tensor::from_vec(vec![3.7])).unwrap();
        adam.apply(&mut p, &g).unwrap();
        let moved = 1.0 - p.get("w").unwrap().data()[0];
        assert!((moved - lr).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = 0.5 * ||w||^2, grad = w. 200 steps at lr 0.1 from [3, -4].
        let mut p = one_param(vec![3.0, -4.0]);
        let mut adam = AdamState::new(AdamParams::with_lr(0.1));
        let mut last = f64::INFINITY;
        for step in 0..200 {
            let w = p.get("w").unwrap().clone();
            let f: f64 = 0.5 * w.data().iter().map(|v| v * v).sum::<f64>();
            if step % 50 == 0 {
                assert!(f <= last + 1e-9, "loss rose at step {step}");
                last = f;
            }
            let mut g = GradRecord::new();
            g.accumulate("w", w).unwrap();
            adam.apply(&mut p, &g).unwrap();
        }
        let f: f64 = 0.5 * p.get("w").unwrap().data().iter().map(|v| v * v).sum::<f64>();
        assert!(f < 1e-2, "final loss {f}");
    }

    #[test]
    fn frozen_group_rejects_gradient() {
        let mut p = ParamSet::new();
        p.insert_frozen("backbone", Tensor::from_vec(vec![1.0f64]));
        let mut adam = AdamState::new(AdamParams::with_lr(0.1));
        let mut g = GradRecord::new();
        g.accumulate("backbone", Tensor::from_vec(vec![1.0])).unwrap();
        assert!(adam.apply(&mut p, &g).is_err());
    }

    #[test]
    fn non_finite_gradient_rejected_before_state_change() {
        let mut p = one_param(vec![1.0]);
        let mut adam = AdamState::new(AdamParams::with_lr(0.1));
        let mut g = GradRecord::new();
        g.accumulate("w", Tensor::from_vec(vec![f64::NAN])).unwrap();
        assert!(adam.apply(&mut p, &g).is_err());
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn grad_record_accumulates_sums() {
        let mut g = GradRecord::new();
        g.accumulate("w", Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        g.accumulate("w", Tensor::from_vec(vec![0.5, -1.0])).unwrap();
        assert_eq!(g.get("w").unwrap().data(), &[1.5, 1.0]);
    }

    #[test]
    fn paramset_iteration_is_name_sorted() {
        let mut p: ParamSet<f32> = ParamSet::new();
        p.insert("zeta", Tensor::zeros(&[1]));
        p.insert("alpha", Tensor::zeros(&[1]));
        p.insert("mid", Tensor::zeros(&[1]));
        let names: Vec<&str> = p.iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["alpha", "mid", "zeta"]);
    }
}
