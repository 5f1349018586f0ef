//! Central-difference verification of reverse-mode gradients.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::optim::{GradRecord, ParamSet};

/// Relative-error floor: differences are measured against
/// `max(|analytic|, |numeric|, REL_FLOOR)` so that near-zero gradient pairs
/// (dead ReLU units, unused rows) are not amplified into spurious failures by
/// finite-difference rounding noise.
pub const REL_FLOOR: f64 = 1e-6;

/// Outcome of a gradient check: worst relative error per parameter group.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_group: BTreeMap<String, f64>,
    pub max: f64,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max <= tol
    }
}

/// Compare reverse-mode gradients against central differences
/// `(f(p+eps) − f(p−eps)) / (2·eps)`, elementwise over every trainable group.
///
/// `f` evaluates the loss at the given parameters; when the second argument
/// is true it must also return the analytic gradients. The check runs in
/// `f64` — callers cast their models up — so the difference quotient retains
/// ~11 significant digits at `eps = 1e-5`.
///
/// The loss function is evaluated twice at the base point first; any bitwise
/// mismatch means it is non-deterministic and the check would be meaningless.
pub fn grad_check<F>(mut f: F, params: &ParamSet<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet<f64>, bool) -> Result<(f64, Option<GradRecord<f64>>)>,
{
    if eps <= 0.0 {
        return Err(Error::validation("grad_check eps must be positive"));
    }
    let (base_loss, grads) = f(params, true)?;
    let grads = grads
        .ok_or_else(|| Error::structural("loss function returned no gradients when asked"))?;
    let (repeat_loss, _) = f(params, false)?;
    if base_loss.to_bits() != repeat_loss.to_bits() {
        return Err(Error::validation(format!(
            "loss function is non-deterministic: {base_loss} vs {repeat_loss} at the same point"
        )));
    }

    let mut work = params.clone();
    let mut per_group = BTreeMap::new();
    let mut max = 0.0f64;
    let mut elements_checked = 0;
    for name in params.names() {
        if !params.is_trainable(&name) {
            continue;
        }
        let n = params.get(&name)?.len();
        let mut group_max = 0.0f64;
        for idx in 0..n {
            let orig = work.get(&name)?.data()[idx];
            work.get_mut(&name)?.data_mut()[idx] = orig + eps;
            let (up, _) = f(&work, false)?;
            work.get_mut(&name)?.data_mut()[idx] = orig - eps;
            let (down, _) = f(&work, false)?;
            work.get_mut(&name)?.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(&name).map(|g| g.data()[idx]).unwrap_or(0.0);
            let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            group_max = group_max.max(rel);
            elements_checked += 1;
        }
        max = max.max(group_max);
        per_group.insert(name, group_max);
    }
    Ok(GradCheckReport { per_group, max, elements_checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tape::Tape;
    use crate::numcore::tensor::Tensor;

    #[test]
    fn quadratic_loss_checks_clean() {
        // f = ½‖p‖², grad = p.
        let mut params = ParamSet::new();
        params.insert("p", Tensor::from_vec(vec![1.0, -2.0, 0.3]));
        let report = grad_check(
            |p, want| {
                let w = p.get("p")?;
                let loss = 0.5 * w.data().iter().map(|v| v * v).sum::<f64>();
                let g = want.then(|| {
                    let mut g = GradRecord::new();
                    g.accumulate("p", w.clone()).unwrap();
                    g
                });
                Ok((loss, g))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(report.max < 1e-9, "max rel err {}", report.max);
        assert_eq!(report.elements_checked, 3);
    }

    #[test]
    fn linear_loss_checks_to_1e10() {
        let c = [3.0, -1.5, 0.25, 7.0];
        let mut params = ParamSet::new();
        params.insert("p", Tensor::from_vec(vec![0.1, 0.2, -0.4, 2.0]));
        let report = grad_check(
            |p, want| {
                let w = p.get("p")?;
                let loss: f64 = w.data().iter().zip(&c).map(|(a, b)| a * b).sum();
                let g = want.then(|| {
                    let mut g = GradRecord::new();
                    g.accumulate("p", Tensor::from_vec(c.to_vec())).unwrap();
                    g
                });
                Ok((loss, g))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(report.max <= 1e-10, "max rel err {}", report.max);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut params = ParamSet::new();
        params.insert("p", Tensor::from_vec(vec![1.0]));
        let report = grad_check(
            |p, want| {
                let w = p.get("p")?.data()[0];
                let g = want.then(|| {
                    let mut g = GradRecord::new();
                    // True gradient of w² is 2w; claim 3w to force a mismatch.
                    g.accumulate("p", Tensor::from_vec(vec![3.0 * w])).unwrap();
                    g
                });
                Ok((w * w, g))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(report.max > 0.3, "expected detection, got {}", report.max);
    }

    #[test]
    fn non_deterministic_loss_is_rejected() {
        let mut params = ParamSet::new();
        params.insert("p", Tensor::from_vec(vec![1.0]));
        let mut calls = 0u32;
        let err = grad_check(
            |_, want| {
                calls += 1;
                Ok((calls as f64, want.then(GradRecord::new)))
            },
            &params,
            1e-5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-deterministic"));
    }

    #[test]
    fn two_layer_mlp_tape_gradients_check() {
        // 2-layer ReLU MLP with MSE head, gradients from the tape.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (d_in, d_h, d_out) = (3, 4, 2);
        let mut params = ParamSet::new();
        params.insert("w1", Tensor::randn(&[d_in, d_h], 0.7, &mut rng));
        params.insert("b1", Tensor::randn(&[d_h], 0.2, &mut rng));
        params.insert("w2", Tensor::randn(&[d_h, d_out], 0.7, &mut rng));
        params.insert("b2", Tensor::randn(&[d_out], 0.2, &mut rng));
        let x = Tensor::randn(&[5, d_in], 1.0, &mut rng);
        let target = Tensor::randn(&[5, d_out], 1.0, &mut rng);

        let report = grad_check(
            |p, want| {
                let mut tape = Tape::new();
                let xin = tape.constant(x.clone());
                let w1 = tape.param(p, "w1")?;
                let b1 = tape.param(p, "b1")?;
                let w2 = tape.param(p, "w2")?;
                let b2 = tape.param(p, "b2")?;
                let h = tape.linear(xin, w1, b1)?;
                let h = tape.relu(h);
                let y = tape.linear(h, w2, b2)?;
                let loss = tape.mse_const(y, &target)?;
                let value = tape.value(loss).scalar_value();
                let g = if want { Some(tape.backward(loss)?) } else { None };
                Ok((value, g))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(report.max <= 1e-6, "max rel err {}", report.max);
    }
}
