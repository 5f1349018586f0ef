//! Ablate the distillation objective one term at a time and compare the
//! resulting students on the held-out test split.
//!
//! Five variants, each distilled from the same frozen teacher under the
//! same budget, differing only in the loss:
//!
//!   full           MSE + w·reverse-KL, with the document-latent product
//!   w/o-mul        no elementwise product with the cached document latent
//!   w/o-MSE        KL term only
//!   w/o-KL         MSE term only
//!   w/-KL-forward  forward KL in place of reverse KL
//!
//! The one to watch is w/o-mul: the latent product is the student's only
//! document-dependent input, so without it every document in the pool gets
//! the same score and retrieval collapses to chance. Averaging over several
//! seeds (`--seeds 3`) smooths single-run noise.
//!
//!     cargo run --release --example ablations -- --teacher /tmp/teacher.json
//!
//! Without `--teacher` a fresh teacher is fine-tuned first (several minutes).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use jepa_ir::datagen::{synth_task, Split, SynthRule};
use jepa_ir::distill::{
    student_config_for, train_student, training_pairs, AblationVariant, DistillHyper,
};
use jepa_ir::evalx::compute_metrics;
use jepa_ir::numcore::ParamSet;
use jepa_ir::student::{index_documents, init_predictor, retrieve, PredictSpan};
use jepa_ir::teacher::{build_sft_dataset, sft_train, ScoreMode, SftHyper};
use jepa_ir::tinylm::{init_params, load_checkpoint, tokenize, LMConfig};

#[derive(Parser, Debug)]
#[command(about = "Compare distillation-objective ablations on one task")]
struct Args {
    /// Trained teacher checkpoint; trains one from scratch when absent.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Distillation steps per variant and seed.
    #[arg(long, default_value_t = 600)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 0.25)]
    w: f64,
    /// Number of predictor seeds to average per variant.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
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
    let cache = index_documents(&params, &cfg, &ds.pool)?;
    let pairs = training_pairs(&ds, Split::Train);
    let test_queries = ds.queries_in(Split::Test);

    println!(
        "{} variants x {} seed(s), {} steps each over {} pairs\n",
        AblationVariant::ALL.len(),
        args.seeds,
        args.steps,
        pairs.len()
    );
    println!("  variant        seeds      R@1    R@2    MRR");

    let mut means: BTreeMap<&str, f64> = BTreeMap::new();
    for variant in AblationVariant::ALL {
        let started = Instant::now();
        let (mut r1s, mut r2s, mut mrrs) = (Vec::new(), Vec::new(), Vec::new());
        for s in 0..args.seeds {
            let seed = args.seed + s;
            let mut theta: ParamSet<f32> = init_predictor(cfg.d_model, 2, seed)?;
            let hyper = DistillHyper {
                w: args.w,
                lr: args.lr,
                batch: args.batch,
                steps: args.steps,
                seed,
            };
            train_student(
                &params,
                &cfg,
                &mut theta,
                &cache,
                &ds,
                &pairs,
                &hyper,
                variant,
                PredictSpan::Full,
            )?;
            let scfg = student_config_for(variant, PredictSpan::Full);
            let mut ids = Vec::new();
            let mut rankings: Vec<Vec<String>> = Vec::new();
            let mut positives = Vec::new();
            for q in &test_queries {
                let ranked = retrieve(
                    &params,
                    &cfg,
                    &theta,
                    &scfg,
                    &cache,
                    &tokenize(&cfg, &q.text),
                    ds.pool.len(),
                    args.score_mode,
                )?;
                ids.push(q.id.clone());
                rankings.push(ranked.into_iter().map(|(id, _)| id).collect());
                positives.push(ds.positives_of(&q.id).cloned().unwrap_or_default());
            }
            let m = compute_metrics(&ids, &rankings, &positives, &[1, 2], ds.pool.len())?;
            r1s.push(m.recall_at[&1]);
            r2s.push(m.recall_at[&2]);
            mrrs.push(m.mrr);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        means.insert(variant.label(), mean(&r1s));
        println!(
            "  {:<13}  {:>5}     {:.3}  {:.3}  {:.3}   ({:.0}s)",
            variant.label(),
            args.seeds,
            mean(&r1s),
            mean(&r2s),
            mean(&mrrs),
            started.elapsed().as_secs_f64()
        );
    }

    let full = means["full"];
    let wo_mul = means["w/o-mul"];
    println!(
        "\nseed-mean R@1: full {:.3} vs w/o-mul {:.3} (gap {:.3}); random baseline {:.3}",
        full,
        wo_mul,
        full - wo_mul,
        1.0 / ds.pool.len() as f64
    );
    println!("without the document latent the student cannot tell documents apart");
    Ok(())
}

fn obtain_teacher(args: &Args) -> jepa_ir::Result<(LMConfig, ParamSet<f32>)> {
    if let Some(path) = &args.teacher {
        let ckpt = load_checkpoint::<f32>(path)?;
        let (cfg, mut params) = (ckpt.config, ckpt.params);
        params.freeze_all();
        println!("teacher: {} (d={}, {} layers)", path.display(), cfg.d_model, cfg.n_layers);
        return Ok((cfg, params));
    }
    println!("no --teacher given; fine-tuning one from scratch first");
    let cfg = LMConfig { d_model: 32, n_layers: 2, n_heads: 2, ..Default::default() };
    let rule = SynthRule { seed: args.seed, n_docs: args.n_docs, ..Default::default() };
    let ds = synth_task(&rule, args.train_queries, args.dev_queries, args.test_queries)?;
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
