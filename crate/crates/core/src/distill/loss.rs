//! The distillation objective: state reconstruction plus answer-distribution
//! matching.
//!
//! The student is pulled toward the teacher on two coupled surfaces — the
//! joint-encoding query states (mean squared error) and the answer-token
//! distribution (KL divergence at the answer position). The KL direction is
//! reverse by default, KL(student ‖ teacher): mode-seeking, so the student
//! commits to the teacher's dominant answer rather than hedging across all
//! of them (see `modes` for a self-contained demonstration).

use crate::error::{Error, Result};
use crate::numcore::{Real, Tensor, LOG_CLAMP};
use crate::student::StudentOutput;
use crate::teacher::TeacherTargets;

/// Sum tolerance for probability-vector validation.
const PROB_SUM_TOL: f64 = 1e-6;

fn check_prob_vector(name: &str, p: &[f64], other_len: usize) -> Result<()> {
    if p.len() != other_len {
        return Err(Error::structural(format!(
            "{name}: length {} does not match {}",
            p.len(),
            other_len
        )));
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::structural(format!("{name}: entries must be finite and nonnegative")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::structural(format!("{name}: sums to {sum}, not 1")));
    }
    Ok(())
}

/// `KL(p_student ‖ p_teacher) = Σ p_s (ln p_s − ln p_t)`, with `0·ln 0 = 0`
/// and the teacher clamped away from zero. Mode-seeking: wherever the
/// student puts mass on a teacher zero, the clamp makes it very expensive.
pub fn reverse_kl(p_student: &[f64], p_teacher: &[f64]) -> Result<f64> {
    check_prob_vector("reverse_kl student", p_student, p_teacher.len())?;
    check_prob_vector("reverse_kl teacher", p_teacher, p_student.len())?;
    let mut total = 0.0;
    for (&ps, &pt) in p_student.iter().zip(p_teacher) {
        if ps > 0.0 {
            total += ps * (ps.ln() - pt.max(LOG_CLAMP).ln());
        }
    }
    Ok(total.max(0.0))
}

/// `KL(p_teacher ‖ p_student) = Σ p_t (ln p_t − ln p_s)`, student clamped.
/// Mean-seeking: the student pays wherever the teacher has mass it missed,
/// so minimizers spread across all teacher modes.
pub fn forward_kl(p_student: &[f64], p_teacher: &[f64]) -> Result<f64> {
    check_prob_vector("forward_kl student", p_student, p_teacher.len())?;
    check_prob_vector("forward_kl teacher", p_teacher, p_student.len())?;
    let mut total = 0.0;
    for (&ps, &pt) in p_student.iter().zip(p_teacher) {
        if pt > 0.0 {
            total += pt * (pt.ln() - ps.max(LOG_CLAMP).ln());
        }
    }
    Ok(total.max(0.0))
}

/// Which term of the objective (or which KL direction) a run trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    /// MSE + w·reverse-KL with the document-latent multiplication.
    #[default]
    Full,
    /// Drop the elementwise product with the document latent — the predictor
    /// loses its only document-dependent input.
    WoMul,
    /// Drop the state-reconstruction term; KL only.
    WoMse,
    /// Drop the KL term; MSE only (w = 0).
    WoKl,
    /// Replace reverse KL with forward KL.
    ForwardKl,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::WoMul,
        AblationVariant::WoMse,
        AblationVariant::WoKl,
        AblationVariant::ForwardKl,
    ];

    /// Human-facing row label for ablation tables.
    pub fn label(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::WoMul => "w/o-mul",
            AblationVariant::WoMse => "w/o-MSE",
            AblationVariant::WoKl => "w/o-KL",
            AblationVariant::ForwardKl => "w/-KL-forward",
        }
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationVariant::Full),
            "wo-mul" => Ok(AblationVariant::WoMul),
            "wo-mse" => Ok(AblationVariant::WoMse),
            "wo-kl" => Ok(AblationVariant::WoKl),
            "forward-kl" => Ok(AblationVariant::ForwardKl),
            other => Err(Error::usage(format!(
                "unknown variant '{other}' (expected full | wo-mul | wo-mse | wo-kl | forward-kl)"
            ))),
        }
    }
}

impl std::fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationVariant::Full => "full",
            AblationVariant::WoMul => "wo-mul",
            AblationVariant::WoMse => "wo-mse",
            AblationVariant::WoKl => "wo-kl",
            AblationVariant::ForwardKl => "forward-kl",
        })
    }
}

/// The two terms of the objective as optimized, and their combination.
///
/// `total = mse + w·kl` always holds on the *effective* terms: a variant
/// that removes a term zeroes that term here (`WoMse` reports `mse = 0`,
/// `WoKl` reports `w = 0` while still logging the measured KL).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillLossParts {
    pub mse: f64,
    pub kl: f64,
    pub w: f64,
    pub total: f64,
}

fn mean_squared_error<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = Real::to_f64(x) - Real::to_f64(y);
        acc += d * d;
    }
    acc / a.len() as f64
}

/// Evaluate the objective for one (query, document) pair.
///
/// The MSE averages over query positions × dimensions, so `w` means the
/// same thing regardless of query length; the KL compares the answer
/// distributions at the final position. The student prediction and the
/// teacher target must cover the same span.
pub fn distill_loss<T: Real>(
    student: &StudentOutput<T>,
    targets: &TeacherTargets<T>,
    w: f64,
    variant: AblationVariant,
) -> Result<DistillLossParts> {
    if w < 0.0 {
        return Err(Error::validation("KL weight w must be nonnegative"));
    }
    let pred = &student.predicted_query_states;
    if pred.shape() != targets.query_states.shape() {
        return Err(Error::structural(format!(
            "span mismatch: student predicts {:?}, teacher target is {:?}",
            pred.shape(),
            targets.query_states.shape()
        )));
    }
    let p_s: Vec<f64> = student.answer_probs.data().iter().map(|&v| Real::to_f64(v)).collect();
    let p_t: Vec<f64> = targets.answer_probs.data().iter().map(|&v| Real::to_f64(v)).collect();

    let raw_mse = mean_squared_error(pred, &targets.query_states);
    let (mse, kl, w_eff) = match variant {
        AblationVariant::Full | AblationVariant::WoMul => {
            (raw_mse, reverse_kl(&p_s, &p_t)?, w)
        }
        AblationVariant::WoMse => (0.0, reverse_kl(&p_s, &p_t)?, w),
        AblationVariant::WoKl => (raw_mse, reverse_kl(&p_s, &p_t)?, 0.0),
        AblationVariant::ForwardKl => (raw_mse, forward_kl(&p_s, &p_t)?, w),
    };
    Ok(DistillLossParts { mse, kl, w: w_eff, total: mse + w_eff * kl })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = [0.3, 0.2, 0.5];
        assert!(reverse_kl(&p, &p).unwrap() < EPS);
        assert!(forward_kl(&p, &p).unwrap() < EPS);
    }

    #[test]
    fn reverse_kl_concentrated_student() {
        // Student all-in on the first symbol: Σ reduces to −ln t_0.
        let s = [1.0, 0.0];
        let t = [0.8, 0.2];
        let expect = -(0.8f64.ln());
        assert!((reverse_kl(&s, &t).unwrap() - expect).abs() < 1e-12, "≈0.22314");
    }

    #[test]
    fn reverse_kl_clamp_produces_large_finite_value() {
        let s = [0.5, 0.5];
        let t = [1.0 - 1e-12, 1e-12];
        let v = reverse_kl(&s, &t).unwrap();
        assert!(v.is_finite());
        assert!(v > 10.0, "clamped tail should dominate: {v}");
    }

    #[test]
    fn forward_kl_hand_value() {
        // 0.5·ln(0.5/0.9) + 0.5·ln(0.5/0.1) ≈ 0.51083
        let s = [0.9, 0.1];
        let t = [0.5, 0.5];
        let expect = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let got = forward_kl(&s, &t).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.51083).abs() < 1e-5);
    }

    #[test]
    fn forward_kl_onehot_teacher_is_cross_entropy() {
        // One-hot teacher has zero entropy, so the divergence is exactly
        // the cross-entropy −ln p_s(mode).
        let s = [0.7, 0.2, 0.1];
        let t = [0.0, 1.0, 0.0];
        let got = forward_kl(&s, &t).unwrap();
        assert!((got - -(0.2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn invalid_probability_vectors_are_rejected() {
        assert!(reverse_kl(&[0.5, 0.6], &[0.5, 0.5]).is_err(), "sum > 1");
        assert!(reverse_kl(&[0.5, 0.5], &[1.5, -0.5]).is_err(), "negative entry");
        assert!(forward_kl(&[1.0], &[0.5, 0.5]).is_err(), "length mismatch");
    }

    fn student_with(pred: Tensor<f32>, probs: Vec<f32>) -> StudentOutput<f32> {
        StudentOutput {
            predicted_query_states: pred,
            answer_probs: Tensor::from_vec(probs),
            score: 0.5,
        }
    }

    fn targets_with(states: Tensor<f32>, probs: Vec<f32>) -> TeacherTargets<f32> {
        TeacherTargets { query_states: states, answer_probs: Tensor::from_vec(probs) }
    }

    #[test]
    fn perfect_reconstruction_zeroes_the_total() {
        let states = Tensor::new(vec![2, 3], vec![0.1, -0.4, 0.2, 0.9, 0.0, -1.0]).unwrap();
        let probs = vec![0.25, 0.25, 0.5];
        let s = student_with(states.clone(), probs.clone());
        let t = targets_with(states, probs);
        let parts = distill_loss(&s, &t, 0.25, AblationVariant::Full).unwrap();
        assert!(parts.total < 1e-12, "energy at reconstruction: {}", parts.total);
    }

    #[test]
    fn zero_prediction_mse_is_mean_squared_target() {
        let states = Tensor::new(vec![1, 4], vec![1.0, -2.0, 3.0, 0.0]).unwrap();
        let probs = vec![0.5, 0.5];
        let s = student_with(Tensor::zeros(&[1, 4]), probs.clone());
        let t = targets_with(states, probs);
        let parts = distill_loss(&s, &t, 0.25, AblationVariant::Full).unwrap();
        let expect = (1.0 + 4.0 + 9.0 + 0.0) / 4.0;
        assert!((parts.mse - expect).abs() < 1e-6);
    }

    #[test]
    fn variants_zero_the_removed_term() {
        let states = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let s = student_with(Tensor::zeros(&[1, 2]), vec![0.9, 0.1]);
        let t = targets_with(states, vec![0.5, 0.5]);

        let wo_kl = distill_loss(&s, &t, 0.25, AblationVariant::WoKl).unwrap();
        assert_eq!(wo_kl.w, 0.0);
        assert!(wo_kl.kl > 0.0, "KL still measured for the curve");
        assert_eq!(wo_kl.total, wo_kl.mse);

        let wo_mse = distill_loss(&s, &t, 0.25, AblationVariant::WoMse).unwrap();
        assert_eq!(wo_mse.mse, 0.0);
        assert_eq!(wo_mse.total, 0.25 * wo_mse.kl);

        let fwd = distill_loss(&s, &t, 0.25, AblationVariant::ForwardKl).unwrap();
        let expect = forward_kl(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        assert!((fwd.kl - expect).abs() < 1e-6);

        for parts in [wo_kl, wo_mse, fwd] {
            assert!((parts.total - (parts.mse + parts.w * parts.kl)).abs() < 1e-12);
        }
    }

    #[test]
    fn span_mismatch_is_an_error() {
        let s = student_with(Tensor::zeros(&[2, 3]), vec![0.5, 0.5]);
        let t = targets_with(Tensor::zeros(&[3, 3]), vec![0.5, 0.5]);
        assert!(distill_loss(&s, &t, 0.25, AblationVariant::Full).is_err());
    }

    #[test]
    fn variant_round_trips_through_strings() {
        for v in AblationVariant::ALL {
            let s = v.to_string();
            assert_eq!(s.parse::<AblationVariant>().unwrap(), v);
        }
        assert!("nope".parse::<AblationVariant>().is_err());
    }
}
