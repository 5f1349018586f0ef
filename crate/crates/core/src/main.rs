//! Command-line driver for the retrieval pipeline.
//!
//! Thin by design: flags are folded into the layered run configuration
//! (defaults < config file < `JEPA_IR_*` environment < flags) and each
//! subcommand dispatches to the library. Exit codes: 0 success, 1 internal
//! error, 2 usage or validation error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jepa_ir::pipeline::{
    cmd_ablate, cmd_bench, cmd_distill, cmd_index, cmd_query, cmd_sweep, cmd_train_teacher,
    env_overrides, load_config_file, RunConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "jepa-ir",
    version,
    about = "Distill a cross-encoding reranker into a cached bi-encoder retriever"
)]
struct Cli {
    /// Flat `key = value` configuration file, lowest-priority layer.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw of the run (mandatory, no default).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory holding the manifest and all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Data source: `synth` or a path to a JSONL dataset.
    #[arg(long, global = true)]
    data: Option<String>,
    /// Optimizer step budget of the invoked command.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Weight of the KL term in the distillation loss.
    #[arg(long, global = true)]
    w: Option<f64>,
    /// Loss variant: full, wo-mul, wo-mse, wo-kl, forward-kl.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Results returned per query.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Scoring rule: eq8 or prob-ratio.
    #[arg(long, global = true)]
    score_mode: Option<String>,
    /// Teacher span the predictor is trained against: full or last.
    #[arg(long, global = true)]
    predict_span: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fine-tune the relevance teacher on labeled pairs.
    TrainTeacher,
    /// Encode the document pool into the offline cache.
    Index,
    /// Distill the student predictor against the frozen teacher.
    Distill,
    /// Rank cached documents for one query.
    Query {
        /// Query text.
        text: String,
    },
    /// Measure per-phase latencies across document lengths.
    Bench,
    /// Distill and evaluate every loss variant.
    Ablate,
    /// Grid-search the KL weight and predictor depth.
    Sweep,
}

fn flag_layer(cli: &Cli) -> BTreeMap<String, String> {
    let mut layer = BTreeMap::new();
    let mut put = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            layer.insert(key.to_string(), v);
        }
    };
    put("seed", cli.seed.map(|v| v.to_string()));
    put("out", cli.out.as_ref().map(|p| p.display().to_string()));
    put("data", cli.data.clone());
    put("steps", cli.steps.map(|v| v.to_string()));
    put("w", cli.w.map(|v| v.to_string()));
    put("variant", cli.variant.clone());
    put("k", cli.k.map(|v| v.to_string()));
    put("score_mode", cli.score_mode.clone());
    put("predict_span", cli.predict_span.clone());
    layer
}

fn run(cli: &Cli) -> jepa_ir::Result<()> {
    let file_layer = match &cli.config {
        Some(path) => load_config_file(path)?,
        None => BTreeMap::new(),
    };
    let env_layer = env_overrides();
    let flags = flag_layer(cli);
    let cfg = RunConfig::resolve(&[&file_layer, &env_layer, &flags])?;
    match &cli.command {
        Command::TrainTeacher => cmd_train_teacher(&cfg),
        Command::Index => cmd_index(&cfg),
        Command::Distill => cmd_distill(&cfg),
        Command::Query { text } => cmd_query(&cfg, text),
        Command::Bench => cmd_bench(&cfg),
        Command::Ablate => cmd_ablate(&cfg),
        Command::Sweep => cmd_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
