//! Fine-tune the relevance teacher on a synthetic retrieval task, then
//! rerank the document pool with it and report retrieval metrics.
//!
//! The teacher is a tiny causal LM asked a fixed true/false question about
//! every (document, query) pair. After supervised fine-tuning on labeled
//! pairs it becomes a cross-encoder: accurate, but costing one full forward
//! pass per candidate document. This example establishes the quality
//! ceiling that the distilled bi-encoder student later tries to reach.
//!
//!     cargo run --release --example train_teacher -- --out /tmp/teacher.json
//!
//! The synthetic task is constructed so that queries share no words with
//! their target documents — a bag-of-words ranker scores at chance — so
//! any lift over the random baseline is learned from the labels alone.

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use jepa_ir::datagen::{synth_task, Split, SynthRule};
use jepa_ir::evalx::compute_metrics;
use jepa_ir::numcore::ParamSet;
use jepa_ir::teacher::{
    build_sft_dataset, mean_ce, sft_train, teacher_rank_pool, template_hash, ScoreMode, SftHyper,
};
use jepa_ir::tinylm::{init_params, save_checkpoint, tokenize, LMConfig, TokenSeq};

#[derive(Parser, Debug)]
#[command(about = "Train the cross-encoding relevance teacher and rerank with it")]
struct Args {
    /// Model width (must be divisible by the head count).
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    n_layers: usize,
    #[arg(long, default_value_t = 2)]
    n_heads: usize,
    /// Optimizer-step budget for fine-tuning.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Size of the strategy-document pool.
    #[arg(long, default_value_t = 8)]
    n_docs: usize,
    /// Queries generated per split.
    #[arg(long, default_value_t = 200)]
    train_queries: usize,
    #[arg(long, default_value_t = 50)]
    dev_queries: usize,
    #[arg(long, default_value_t = 100)]
    test_queries: usize,
    /// Dev-set evaluation cadence in optimizer steps.
    #[arg(long, default_value_t = 100)]
    eval_every: usize,
    /// Non-improving dev evaluations tolerated before stopping early.
    #[arg(long, default_value_t = 12)]
    patience: usize,
    /// Scoring rule used at rerank time.
    #[arg(long, default_value = "eq8")]
    score_mode: ScoreMode,
    /// Where to write the trained checkpoint (skipped when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> jepa_ir::Result<()> {
    env_logger::init();
    let args = Args::parse();

    let cfg = LMConfig {
        d_model: args.d_model,
        n_layers: args.n_layers,
        n_heads: args.n_heads,
        ..Default::default()
    };
    cfg.validate()?;

    let rule = SynthRule { seed: args.seed, n_docs: args.n_docs, ..Default::default() };
    let ds = synth_task(&rule, args.train_queries, args.dev_queries, args.test_queries)?;
    println!(
        "task: {} docs, {}/{}/{} train/dev/test queries, random R@1 = {:.3}",
        ds.pool.len(),
        args.train_queries,
        args.dev_queries,
        args.test_queries,
        1.0 / ds.pool.len() as f64
    );

    let train_examples = build_sft_dataset(&cfg, &ds, Split::Train)?;
    let dev_examples = build_sft_dataset(&cfg, &ds, Split::Dev)?;
    println!(
        "sft pairs: {} train, {} dev ({} tokens per rendered sequence)",
        train_examples.len(),
        dev_examples.len(),
        train_examples[0].render.tokens.len()
    );

    let mut params: ParamSet<f32> = init_params(&cfg, args.seed)?;
    let hyper = SftHyper {
        lr: args.lr,
        batch: args.batch,
        epochs: usize::MAX,
        max_steps: Some(args.steps),
        seed: args.seed,
        eval_every: args.eval_every,
        patience: args.patience,
    };

    let ce_before = mean_ce(&params, &cfg, &train_examples)?;
    let started = Instant::now();
    let report = sft_train(&mut params, &cfg, &train_examples, &dev_examples, &hyper)?;
    let elapsed = started.elapsed().as_secs_f64();
    let ce_after = mean_ce(&params, &cfg, &train_examples)?;
    println!(
        "sft: {} steps in {:.1}s ({:.0} ms/step), train CE {:.4} -> {:.4}, best dev CE {}{}",
        report.steps,
        elapsed,
        1e3 * elapsed / report.steps.max(1) as f64,
        ce_before,
        ce_after,
        report.best_dev_ce.map_or("n/a".into(), |c| format!("{c:.4}")),
        if report.early_stopped { " (early stop)" } else { "" },
    );
    let dev_trace: Vec<String> =
        report.dev_curve.iter().map(|p| format!("{}:{:.3}", p.step, p.value)).collect();
    println!("dev CE trace: {}", dev_trace.join(" "));

    params.freeze_all();
    let pool: Vec<(String, TokenSeq)> =
        ds.pool.iter().map(|d| (d.id.clone(), tokenize(&cfg, &d.text))).collect();
    let test_queries = ds.queries_in(Split::Test);
    let mut query_ids = Vec::new();
    let mut rankings = Vec::new();
    let mut positives = Vec::new();
    for q in &test_queries {
        let ranked =
            teacher_rank_pool(&params, &cfg, &pool, &tokenize(&cfg, &q.text), args.score_mode)?;
        query_ids.push(q.id.clone());
        rankings.push(ranked.into_iter().map(|(id, _)| id).collect());
        positives.push(ds.positives_of(&q.id).cloned().unwrap_or_default());
    }
    let metrics = compute_metrics(&query_ids, &rankings, &positives, &[1, 2, 4], pool.len())?;
    println!(
        "teacher rerank over {} test queries: R@1 {:.3}  R@2 {:.3}  R@4 {:.3}  MRR {:.3}",
        test_queries.len(),
        metrics.recall_at[&1],
        metrics.recall_at[&2],
        metrics.recall_at[&4],
        metrics.mrr
    );

    if let Some(path) = &args.out {
        let meta = serde_json::json!({
            "role": "teacher",
            "template_hash": template_hash(&cfg),
            "sft_steps": report.steps,
            "best_dev_ce": report.best_dev_ce,
            "test_recall_at_1": metrics.recall_at[&1],
            "seed": args.seed,
        });
        save_checkpoint(path, &cfg, &params, meta)?;
        println!("checkpoint written to {}", path.display());
    }
    Ok(())
}
