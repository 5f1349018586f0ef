//! End-to-end pipeline: layered run configuration, artifact bookkeeping
//! with a content-hash manifest, and the commands that chain teacher
//! fine-tuning, indexing, distillation, retrieval, benchmarking, ablations,
//! and the hyperparameter sweep.

pub mod artifacts;
pub mod commands;
pub mod config;

pub use artifacts::{sha256_hex, Manifest, ManifestEntry, Workspace};
pub use commands::{
    cmd_ablate, cmd_bench, cmd_distill, cmd_index, cmd_query, cmd_sweep, cmd_train_teacher,
    eval_student, eval_teacher, BENCH_DOC_SIZES, BENCH_QUERY_LEN, SWEEP_DEPTH_GRID, SWEEP_W_GRID,
};
pub use config::{env_overrides, load_config_file, parse_flat, DataSource, RunConfig, ENV_PREFIX};
