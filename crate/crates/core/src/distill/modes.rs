//! A self-contained demonstration of why the KL direction matters.
//!
//! Constrain the student to (temperature-softened) one-hot distributions
//! and brute-force both KL directions against a multi-modal teacher. The
//! reverse direction picks the teacher's single strongest mode. The forward
//! direction, given any family rich enough to hedge — here, two-component
//! mixtures — prefers spreading mass across modes. This is the asymmetry
//! that makes reverse KL the right default for distilling a decisive
//! answer distribution.

use crate::error::{Error, Result};

use super::loss::{forward_kl, reverse_kl};

/// Default sharpening temperature for the softened one-hot family.
pub const MODE_TEMPERATURE: f64 = 0.05;

/// The softened one-hot distribution at `location`: softmax of a one-hot
/// logit vector scaled by `1/temperature`. Low temperature concentrates
/// nearly all mass on the location while keeping every entry positive.
pub fn softened_onehot(len: usize, location: usize, temperature: f64) -> Vec<f64> {
    assert!(location < len, "location {location} out of {len}");
    assert!(temperature > 0.0, "temperature must be positive");
    let hot = (1.0 / temperature).exp();
    let z = hot + (len - 1) as f64;
    (0..len).map(|v| if v == location { hot / z } else { 1.0 / z }).collect()
}

/// A two-component mixture of softened one-hots: the widened family that
/// lets the forward direction express its preference for hedging.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSolution {
    pub locations: (usize, usize),
    /// Mixture weight on the first location.
    pub weight: f64,
    /// The induced distribution over the support.
    pub induced: Vec<f64>,
    pub kl: f64,
}

/// What the brute-force minimization found in each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSeekingResult {
    /// Reverse-KL minimizer over the one-parameter softened one-hot family.
    pub reverse_argmax: usize,
    pub reverse_kl_at_min: f64,
    /// Forward-KL minimizer over the same narrow family, for reference.
    pub forward_argmax: usize,
    pub forward_kl_at_min: f64,
    /// Forward-KL minimizer over the widened two-component family.
    pub forward_solution: MixtureSolution,
    /// Total-variation distance between the reverse minimizer's induced
    /// distribution and the widened forward solution — "how differently the
    /// two directions behave", as a single number.
    pub divergence_between_solutions: f64,
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn mix(a: &[f64], b: &[f64], weight: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| weight * x + (1.0 - weight) * y).collect()
}

/// Brute-force both KL directions against `teacher` over the constrained
/// families. Ties resolve to the lowest index / first grid cell, so the
/// result is deterministic.
pub fn mode_seeking_demo(teacher: &[f64], temperature: f64) -> Result<ModeSeekingResult> {
    if teacher.len() < 2 {
        return Err(Error::validation("teacher distribution needs at least two outcomes"));
    }
    let sum: f64 = teacher.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || teacher.iter().any(|&p| p < 0.0) {
        return Err(Error::validation("teacher must be a probability vector"));
    }
    if temperature <= 0.0 {
        return Err(Error::validation("temperature must be positive"));
    }
    let v = teacher.len();
    let onehots: Vec<Vec<f64>> = (0..v).map(|m| softened_onehot(v, m, temperature)).collect();

    let mut best_rev: Option<(usize, f64)> = None;
    let mut best_fwd: Option<(usize, f64)> = None;
    for m in 0..v {
        let rev = reverse_kl(&onehots[m], teacher)?;
        let fwd = forward_kl(&onehots[m], teacher)?;
        if best_rev.is_none_or(|(_, b)| rev < b) {
            best_rev = Some((m, rev));
        }
        if best_fwd.is_none_or(|(_, b)| fwd < b) {
            best_fwd = Some((m, fwd));
        }
    }
    let (reverse_argmax, reverse_kl_at_min) = best_rev.expect("nonempty grid");
    let (forward_argmax, forward_kl_at_min) = best_fwd.expect("nonempty grid");

    // Widened family: every location pair × a weight grid.
    let mut best_mix: Option<MixtureSolution> = None;
    for m1 in 0..v {
        for m2 in m1 + 1..v {
            for wi in 1..20 {
                let weight = wi as f64 / 20.0;
                let induced = mix(&onehots[m1], &onehots[m2], weight);
                let kl = forward_kl(&induced, teacher)?;
                if best_mix.as_ref().is_none_or(|b| kl < b.kl) {
                    best_mix =
                        Some(MixtureSolution { locations: (m1, m2), weight, induced, kl });
                }
            }
        }
    }
    let forward_solution = best_mix.expect("nonempty mixture grid");
    let divergence_between_solutions =
        total_variation(&onehots[reverse_argmax], &forward_solution.induced);

    Ok(ModeSeekingResult {
        reverse_argmax,
        reverse_kl_at_min,
        forward_argmax,
        forward_kl_at_min,
        forward_solution,
        divergence_between_solutions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn near_uniform_tail(head: &[f64], len: usize) -> Vec<f64> {
        // Distribute the leftover mass as a tiny uniform tail.
        let head_sum: f64 = head.iter().sum();
        let tail = (1.0 - head_sum) / (len - head.len()) as f64;
        let mut out = head.to_vec();
        out.extend(std::iter::repeat(tail).take(len - head.len()));
        out
    }

    #[test]
    fn reverse_direction_sits_on_the_top_mode() {
        let teacher = near_uniform_tail(&[0.6, 0.4], 16);
        let r = mode_seeking_demo(&teacher, MODE_TEMPERATURE).unwrap();
        assert_eq!(r.reverse_argmax, 0);
        assert!(r.reverse_kl_at_min.is_finite());
    }

    #[test]
    fn onehot_teacher_is_unanimous() {
        let mut teacher = vec![0.0; 8];
        teacher[3] = 1.0;
        let r = mode_seeking_demo(&teacher, MODE_TEMPERATURE).unwrap();
        assert_eq!(r.reverse_argmax, 3);
        assert_eq!(r.forward_argmax, 3);
    }

    #[test]
    fn symmetric_teacher_ties_break_low_and_forward_hedges() {
        let teacher = near_uniform_tail(&[0.5, 0.5], 12);
        let r = mode_seeking_demo(&teacher, MODE_TEMPERATURE).unwrap();
        // Tie between locations 0 and 1 resolves to the lower index.
        assert_eq!(r.reverse_argmax, 0);
        // The widened forward solution spreads real mass over both modes.
        assert_eq!(r.forward_solution.locations, (0, 1));
        assert!(
            r.forward_solution.induced[0] >= 0.3 && r.forward_solution.induced[1] >= 0.3,
            "forward solution failed to hedge: {:?}",
            &r.forward_solution.induced[..2]
        );
        assert!(r.divergence_between_solutions > 0.2);
    }

    #[test]
    fn softened_onehot_is_a_sharp_distribution() {
        let p = softened_onehot(10, 4, MODE_TEMPERATURE);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p[4] > 0.999);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn invalid_teachers_are_rejected() {
        assert!(mode_seeking_demo(&[1.0], MODE_TEMPERATURE).is_err());
        assert!(mode_seeking_demo(&[0.7, 0.7], MODE_TEMPERATURE).is_err());
        assert!(mode_seeking_demo(&[0.5, 0.5], 0.0).is_err());
    }
}
