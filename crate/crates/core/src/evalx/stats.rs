//! Statistical significance: Welch's t-test and a KS uniformity check.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Two-sided Welch test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test (two-sided).
///
/// Degenerate inputs get the limiting answers: zero variance on both sides
/// yields p = 1 for equal means and p = 0 otherwise.
pub fn significance_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::validation("significance test needs ≥ 2 samples per side"));
    }
    let (ma, va) = mean_and_var(a);
    let (mb, vb) = mean_and_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let same = ma == mb;
        return Ok(SignificanceResult {
            t_statistic: if same { 0.0 } else { f64::INFINITY },
            degrees_of_freedom: na + nb - 2.0,
            p_value: if same { 1.0 } else { 0.0 },
        });
    }
    let t = (ma - mb) / se2.sqrt();
    // Welch–Satterthwaite degrees of freedom.
    let df = se2.powi(2)
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::numeric(format!("invalid t-distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(SignificanceResult { t_statistic: t, degrees_of_freedom: df, p_value: p.clamp(0.0, 1.0) })
}

/// Kolmogorov–Smirnov distance of samples (assumed in [0, 1]) against the
/// uniform distribution, with the 5% asymptotic critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_5pct: f64,
}

impl KsResult {
    pub fn uniform_at_5pct(&self) -> bool {
        self.statistic < self.critical_5pct
    }
}

pub fn ks_uniform_test(samples: &[f64]) -> Result<KsResult> {
    if samples.len() < 5 {
        return Err(Error::validation("KS test needs ≥ 5 samples"));
    }
    if samples.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::validation("KS uniformity test expects samples in [0, 1]"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let upper = (i + 1) as f64 / n - x;
        let lower = x - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    Ok(KsResult { statistic: d, critical_5pct: 1.358 / n.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identical_samples_give_p_one() {
        let a = [0.3, 0.3, 0.3];
        let r = significance_test(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn reported_separated_samples_are_significant() {
        // Means 0.239 vs 0.328 with sd ≈ 0.023/0.044 at n = 10.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..10).map(|_| 0.239 + 0.023 * rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..10).map(|_| 0.328 + 0.044 * rng.gen_range(-1.0..1.0)).collect();
        let r = significance_test(&a, &b).unwrap();
        assert!(r.p_value < 1e-3, "p = {}", r.p_value);
    }

    #[test]
    fn zero_variance_different_means_is_p_zero() {
        let a = [0.1, 0.1];
        let b = [0.9, 0.9];
        let r = significance_test(&a, &b).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(significance_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn null_p_values_are_roughly_uniform() {
        // Shuffled-label null: both sides drawn from the same distribution.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut ps = Vec::new();
        for _ in 0..200 {
            let a: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
            ps.push(significance_test(&a, &b).unwrap().p_value);
        }
        let ks = ks_uniform_test(&ps).unwrap();
        assert!(ks.uniform_at_5pct(), "D = {} ≥ {}", ks.statistic, ks.critical_5pct);
    }

    #[test]
    fn ks_detects_non_uniform_samples() {
        let clumped: Vec<f64> = (0..200).map(|i| 0.4 + 0.2 * (i as f64 / 200.0)).collect();
        let ks = ks_uniform_test(&clumped).unwrap();
        assert!(!ks.uniform_at_5pct());
    }

    #[test]
    fn ks_critical_value_at_n_200() {
        let samples: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let ks = ks_uniform_test(&samples).unwrap();
        assert!((ks.critical_5pct - 1.358 / (200.0f64).sqrt()).abs() < 1e-12);
        assert!(ks.uniform_at_5pct()); // evenly spread grid is maximally uniform
    }
}
