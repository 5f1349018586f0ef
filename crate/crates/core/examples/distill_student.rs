//! Distill the cross-encoding teacher into the bi-encoder student, then
//! compare the two on the held-out test split.
//!
//! The teacher scores a (document, query) pair with a full joint forward
//! pass — accurate but O(pool size) joint encodes per query. The student
//! reuses a precomputed per-document cache: one solo query encode, then per
//! candidate only a small MLP, an elementwise product with the cached
//! document latent, and one head read. Distillation trains that MLP (and
//! nothing else) to reproduce the teacher's joint-space query states and
//! answer distribution on the student's own inputs.
//!
//!     cargo run --release --example train_teacher -- --steps 2000 --lr 1e-3 \
//!         --out /tmp/teacher.json
//!     cargo run --release --example distill_student -- --teacher /tmp/teacher.json
//!
//! Without `--teacher` a fresh teacher is fine-tuned first with the same
//! recipe (several minutes).

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use jepa_ir::datagen::{synth_task, RetrievalDataset, Split, SynthRule};
use jepa_ir::distill::{train_student, training_pairs, AblationVariant, DistillHyper};
use jepa_ir::evalx::compute_metrics;
use jepa_ir::numcore::ParamSet;
use jepa_ir::student::{index_documents, init_predictor, retrieve, PredictSpan, StudentConfig};
use jepa_ir::teacher::{build_sft_dataset, sft_train, teacher_rank_pool, ScoreMode, SftHyper};
use jepa_ir::tinylm::{init_params, load_checkpoint, tokenize, LMConfig, TokenSeq};

#[derive(Parser, Debug)]
#[command(about = "Distill the teacher into the cached bi-encoder student")]
struct Args {
    /// Trained teacher checkpoint; trains one from scratch when absent.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Distillation optimizer steps.
    #[arg(long, default_value_t = 600)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Weight of the KL term against the state-matching MSE.
    #[arg(long, default_value_t = 0.25)]
    w: f64,
    /// Predictor depth in linear layers.
    #[arg(long, default_value_t = 2)]
    pred_layers: usize,
    /// Which query positions the predictor matches: full | last.
    #[arg(long, default_value = "full")]
    predict_span: PredictSpan,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    n_docs: usize,
    #[arg(long, default_value_t = 200)]
    train_queries: usize,
    #[arg(long, default_value_t = 50)]
    dev_queries: usize,
    #[arg(long, default_value_t = 100)]
    test_queries: usize,
    #[arg(long, default_value = "eq8")]
    score_mode: ScoreMode,
}

fn main() -> jepa_ir::Result<()> {
    env_logger::init();
    let args = Args::parse();

    let (cfg, params) = obtain_teacher(&args)?;
    let rule = SynthRule { seed: args.seed, n_docs: args.n_docs, ..Default::default() };
    let ds = synth_task(&rule, args.train_queries, args.dev_queries, args.test_queries)?;

    let started = Instant::now();
    let cache = index_documents(&params, &cfg, &ds.pool)?;
    println!(
        "indexed {} documents in {:.0} ms (one-time offline cost, reused by every query)",
        cache.len(),
        1e3 * started.elapsed().as_secs_f64()
    );

    let mut theta: ParamSet<f32> = init_predictor(cfg.d_model, args.pred_layers, args.seed)?;
    let pairs = training_pairs(&ds, Split::Train);
    let hyper = DistillHyper {
        w: args.w,
        lr: args.lr,
        batch: args.batch,
        steps: args.steps,
        seed: args.seed,
    };
    println!(
        "distilling over {} (query, document) pairs: {} steps, batch {}, w = {}",
        pairs.len(),
        hyper.steps,
        hyper.batch,
        hyper.w
    );
    let started = Instant::now();
    let report = train_student(
        &params,
        &cfg,
        &mut theta,
        &cache,
        &ds,
        &pairs,
        &hyper,
        AblationVariant::Full,
        args.predict_span,
    )?;
    let elapsed = started.elapsed().as_secs_f64();
    let first = report.curve.first().expect("nonzero steps");
    let last = report.curve.last().expect("nonzero steps");
    println!(
        "distilled in {:.1}s ({:.0} ms/step): total {:.4} -> {:.4} (mse {:.4} -> {:.4}, kl {:.4} -> {:.4})",
        elapsed,
        1e3 * elapsed / report.steps as f64,
        first.total,
        last.total,
        first.mse,
        last.mse,
        first.kl,
        last.kl,
    );

    // Rank the full pool with both models on the same held-out queries.
    let scfg = StudentConfig { predict_span: args.predict_span, use_doc_mul: true };
    let pool: Vec<(String, TokenSeq)> =
        ds.pool.iter().map(|d| (d.id.clone(), tokenize(&cfg, &d.text))).collect();
    let test_queries = ds.queries_in(Split::Test);
    let mut ids = Vec::new();
    let mut teacher_rankings: Vec<Vec<String>> = Vec::new();
    let mut student_rankings: Vec<Vec<String>> = Vec::new();
    let mut positives = Vec::new();
    let mut agree = 0usize;
    for q in &test_queries {
        let qtok = tokenize(&cfg, &q.text);
        let t: Vec<String> = teacher_rank_pool(&params, &cfg, &pool, &qtok, args.score_mode)?
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        let s: Vec<String> =
            retrieve(&params, &cfg, &theta, &scfg, &cache, &qtok, ds.pool.len(), args.score_mode)?
                .into_iter()
                .map(|(id, _)| id)
                .collect();
        agree += usize::from(t[0] == s[0]);
        ids.push(q.id.clone());
        teacher_rankings.push(t);
        student_rankings.push(s);
        positives.push(ds.positives_of(&q.id).cloned().unwrap_or_default());
    }
    let ks = [1, 2, 4];
    let teacher_m = compute_metrics(&ids, &teacher_rankings, &positives, &ks, ds.pool.len())?;
    let student_m = compute_metrics(&ids, &student_rankings, &positives, &ks, ds.pool.len())?;

    println!("\ntest split, {} queries ranking all {} documents:", ids.len(), ds.pool.len());
    println!("  model    R@1    R@2    R@4    MRR");
    println!(
        "  teacher  {:.3}  {:.3}  {:.3}  {:.3}",
        teacher_m.recall_at[&1], teacher_m.recall_at[&2], teacher_m.recall_at[&4], teacher_m.mrr
    );
    println!(
        "  student  {:.3}  {:.3}  {:.3}  {:.3}",
        student_m.recall_at[&1], student_m.recall_at[&2], student_m.recall_at[&4], student_m.mrr
    );
    println!("  random   {:.3}", 1.0 / ds.pool.len() as f64);
    println!(
        "top-1 agreement with the teacher: {}/{} queries",
        agree,
        ids.len()
    );
    Ok(())
}

/// Load the teacher from `--teacher`, or fine-tune one with the default
/// recipe when no checkpoint was given.
fn obtain_teacher(args: &Args) -> jepa_ir::Result<(LMConfig, ParamSet<f32>)> {
    if let Some(path) = &args.teacher {
        let ckpt = load_checkpoint::<f32>(path)?;
        let (cfg, mut params) = (ckpt.config, ckpt.params);
        params.freeze_all();
        println!(
            "teacher: {} (d={}, {} layers, sft_steps={})",
            path.display(),
            cfg.d_model,
            cfg.n_layers,
            ckpt.meta.get("sft_steps").and_then(|v| v.as_u64()).unwrap_or(0),
        );
        return Ok((cfg, params));
    }

    println!("no --teacher given; fine-tuning one from scratch first");
    let cfg = LMConfig { d_model: 32, n_layers: 2, n_heads: 2, ..Default::default() };
    let rule = SynthRule { seed: args.seed, n_docs: args.n_docs, ..Default::default() };
    let ds: RetrievalDataset =
        synth_task(&rule, args.train_queries, args.dev_queries, args.test_queries)?;
    let train = build_sft_dataset(&cfg, &ds, Split::Train)?;
    let dev = build_sft_dataset(&cfg, &ds, Split::Dev)?;
    let mut params: ParamSet<f32> = init_params(&cfg, args.seed)?;
    let hyper = SftHyper {
        lr: 1e-3,
        batch: 16,
        epochs: usize::MAX,
        max_steps: Some(2000),
        seed: args.seed,
        eval_every: 100,
        patience: 12,
    };
    let started = Instant::now();
    let report = sft_train(&mut params, &cfg, &train, &dev, &hyper)?;
    println!(
        "teacher ready: {} sft steps in {:.0}s, best dev CE {}",
        report.steps,
        started.elapsed().as_secs_f64(),
        report.best_dev_ce.map_or("n/a".into(), |c| format!("{c:.4}")),
    );
    params.freeze_all();
    Ok((cfg, params))
}
