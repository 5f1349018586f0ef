//! Wall-clock latency measurement with warmup, median/IQR reporting, and a
//! timer-resolution reliability flag.

use std::time::Instant;

use serde::Serialize;

/// Which pipeline phase a timing row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    OfflineDocEncode,
    OnlineQuery,
    OnlinePerDoc,
    TeacherOnline,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::OfflineDocEncode => "offline_doc_encode",
            Phase::OnlineQuery => "online_query",
            Phase::OnlinePerDoc => "online_per_doc",
            Phase::TeacherOnline => "teacher_online",
        })
    }
}

/// Latency summary for one (phase, size) cell.
#[derive(Debug, Clone, Serialize)]
pub struct TimingRecord {
    pub phase: Phase,
    /// The swept size parameter (a sequence length or a pool size).
    pub size: usize,
    pub repetitions: usize,
    pub median_us: f64,
    pub iqr_us: f64,
    pub mean_us: f64,
    /// True when the timer resolution exceeds a tenth of the median.
    pub unreliable: bool,
}

/// Minimum repetitions; requests below this are raised to it.
pub const MIN_REPS: usize = 5;
/// Warmup invocations discarded before measurement begins.
pub const WARMUP_RUNS: usize = 2;

fn timer_resolution_us() -> f64 {
    // Smallest positive gap observable between consecutive timer reads.
    let mut best = f64::INFINITY;
    for _ in 0..64 {
        let t0 = Instant::now();
        let mut dt = t0.elapsed();
        while dt.is_zero() {
            dt = t0.elapsed();
        }
        best = best.min(dt.as_secs_f64() * 1e6);
    }
    best
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between closest ranks.
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Time a deterministic callable: `WARMUP_RUNS` discarded warmups, then at
/// least [`MIN_REPS`] measured repetitions on the monotonic clock. The
/// median is the headline number (robust to scheduler spikes); mean and IQR
/// are reported alongside.
pub fn measure_rt(mut callable: impl FnMut(), phase: Phase, size: usize, reps: usize) -> TimingRecord {
    let reps = reps.max(MIN_REPS);
    for _ in 0..WARMUP_RUNS {
        callable();
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        callable();
        samples.push(t0.elapsed().as_secs_f64() * 1e6);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = percentile(&samples, 0.5);
    let iqr = percentile(&samples, 0.75) - percentile(&samples, 0.25);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let unreliable = timer_resolution_us() > median / 10.0;
    TimingRecord {
        phase,
        size,
        repetitions: reps,
        median_us: median,
        iqr_us: iqr,
        mean_us: mean,
        unreliable,
    }
}

/// Render timing rows as CSV.
pub fn timings_to_csv(records: &[TimingRecord]) -> String {
    let mut out = String::from("phase,size,repetitions,median_us,iqr_us,mean_us,unreliable\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3},{}\n",
            r.phase, r.size, r.repetitions, r.median_us, r.iqr_us, r.mean_us, r.unreliable
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noop_callable_is_flagged_unreliable() {
        let rec = measure_rt(|| {}, Phase::OnlinePerDoc, 1, 10);
        assert!(rec.unreliable, "no-op median {} µs not flagged", rec.median_us);
    }

    #[test]
    fn known_duration_is_measured_within_tolerance() {
        let rec = measure_rt(
            || std::thread::sleep(std::time::Duration::from_millis(10)),
            Phase::OnlineQuery,
            1,
            5,
        );
        assert!(
            (rec.median_us - 10_000.0).abs() < 2_000.0,
            "10 ms sleep measured as {} µs",
            rec.median_us
        );
        assert!(!rec.unreliable);
    }

    #[test]
    fn minimum_repetitions_are_enforced() {
        let rec = measure_rt(|| {}, Phase::TeacherOnline, 4, 1);
        assert_eq!(rec.repetitions, MIN_REPS);
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let recs = vec![
            measure_rt(|| {}, Phase::OfflineDocEncode, 64, 5),
            measure_rt(|| {}, Phase::OfflineDocEncode, 128, 5),
        ];
        let csv = timings_to_csv(&recs);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("phase,size,"));
        assert!(csv.contains("offline_doc_encode,64,"));
    }
}
