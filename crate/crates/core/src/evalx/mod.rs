//! Evaluation: retrieval metrics, statistical significance, latency
//! measurement, and complexity-exponent fitting.

pub mod metrics;
pub mod slope;
pub mod stats;
pub mod timing;

pub use metrics::{
    compute_metrics, metrics_to_csv, mrr, ndcg, recall_at_k, PerQueryMetrics, RunMetrics,
};
pub use slope::{fit_loglog_slope, SlopeFit};
pub use stats::{ks_uniform_test, significance_test, KsResult, SignificanceResult};
pub use timing::{measure_rt, timings_to_csv, Phase, TimingRecord, MIN_REPS, WARMUP_RUNS};
