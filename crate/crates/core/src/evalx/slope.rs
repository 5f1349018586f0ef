//! Complexity-exponent estimation: least-squares slope of log time against
//! log size.

use serde::Serialize;

use crate::error::{Error, Result};

/// Fitted power-law exponent with goodness of fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fit `log(time) = slope · log(size) + intercept` by least squares.
///
/// Requires at least 4 points whose sizes span a factor of ≥ 8 — narrower
/// sweeps cannot distinguish the exponents this crate cares about (0 vs 1
/// vs 2). Nonpositive times are structural errors (a broken timer, not a
/// slow phase). When the response is constant the fit is exact by the
/// constant model, so R² is reported as 1.
pub fn fit_loglog_slope(sizes: &[usize], medians_us: &[f64]) -> Result<SlopeFit> {
    if sizes.len() != medians_us.len() {
        return Err(Error::structural("sizes and medians length mismatch"));
    }
    if sizes.len() < 4 {
        return Err(Error::validation("slope fit needs ≥ 4 size points"));
    }
    let min = *sizes.iter().min().unwrap();
    let max = *sizes.iter().max().unwrap();
    if min == 0 {
        return Err(Error::validation("sizes must be positive"));
    }
    if (max as f64) / (min as f64) < 8.0 {
        return Err(Error::validation(format!(
            "size span {max}/{min} < 8× is too narrow for exponent fitting"
        )));
    }
    if let Some(&bad) = medians_us.iter().find(|&&t| t <= 0.0 || !t.is_finite()) {
        return Err(Error::structural(format!("nonpositive or non-finite time {bad}")));
    }

    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = medians_us.iter().map(|&t| t.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot < 1e-12 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(SlopeFit { slope, intercept, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIZES: [usize; 5] = [64, 128, 256, 512, 1024];

    #[test]
    fn quadratic_times_fit_slope_two() {
        let times: Vec<f64> = SIZES.iter().map(|&n| (n * n) as f64 * 0.01).collect();
        let fit = fit_loglog_slope(&SIZES, &times).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_times_fit_slope_zero() {
        let times = vec![42.0; SIZES.len()];
        let fit = fit_loglog_slope(&SIZES, &times).unwrap();
        assert!(fit.slope.abs() < 1e-9);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn linear_with_noise_stays_near_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let times: Vec<f64> = SIZES
                .iter()
                .map(|&n| n as f64 * (1.0 + 0.05 * rng.gen_range(-1.0..1.0)))
                .collect();
            let fit = fit_loglog_slope(&SIZES, &times).unwrap();
            assert!(
                (0.9..=1.1).contains(&fit.slope),
                "noisy linear data fit slope {}",
                fit.slope
            );
        }
    }

    #[test]
    fn narrow_span_is_rejected() {
        let sizes = [100, 120, 150, 200];
        let times = [1.0, 1.2, 1.5, 2.0];
        assert!(fit_loglog_slope(&sizes, &times).is_err());
    }

    #[test]
    fn nonpositive_times_are_structural_errors() {
        let times = [1.0, 0.0, 3.0, 4.0, 5.0];
        let err = fit_loglog_slope(&SIZES, &times).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(fit_loglog_slope(&[64, 128, 1024], &[1.0, 2.0, 3.0]).is_err());
    }
}
