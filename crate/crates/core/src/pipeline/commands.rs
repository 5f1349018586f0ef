//! The pipeline commands: teacher fine-tuning, document indexing, predictor
//! distillation, retrieval, timing benchmarks, ablations, and the
//! hyperparameter sweep.
//!
//! Each command locks its output directory, verifies the artifacts it
//! consumes against the manifest, and writes its own outputs (plus the
//! resolved config) back through the manifest. Everything downstream of a
//! seed is deterministic, so re-running a command over the same inputs
//! reproduces its artifacts byte for byte.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::datagen::{RetrievalDataset, Split};
use crate::distill::{
    distill_curve_csv, student_config_for, train_student, training_pairs, AblationVariant,
    DistillHyper,
};
use crate::error::{Error, Result};
use crate::evalx::{
    compute_metrics, fit_loglog_slope, measure_rt, timings_to_csv, Phase, RunMetrics, SlopeFit,
    TimingRecord,
};
use crate::pipeline::artifacts::*;
use crate::pipeline::config::RunConfig;
use crate::student::{
    cache_from_str, cache_to_string, index_documents, init_predictor, predictor_forward,
    retrieve, student_score, DocCache, PredictSpan, StudentConfig,
};
use crate::teacher::{
    build_sft_dataset, sft_train, teacher_rank_pool, teacher_score, template_hash, ScoreMode,
    SftHyper,
};
use crate::numcore::ParamSet;
use crate::tinylm::{
    checkpoint_from_str, checkpoint_to_string, encode, init_params, pad_document, tokenize,
    Checkpoint, LMConfig, TokenSeq,
};

/// Document lengths swept by `bench`.
pub const BENCH_DOC_SIZES: [usize; 4] = [64, 128, 256, 512];
/// Query length used by `bench`.
pub const BENCH_QUERY_LEN: usize = 16;
/// Measured repetitions per `bench` cell (after warmup).
pub const BENCH_REPS: usize = 7;
/// `w` values visited by `sweep`.
pub const SWEEP_W_GRID: [f64; 4] = [0.0, 0.1, 0.25, 1.0];
/// Predictor depths visited by `sweep`.
pub const SWEEP_DEPTH_GRID: [usize; 3] = [1, 2, 3];

/// Fine-tune the relevance teacher; writes the checkpoint and CE curves.
pub fn cmd_train_teacher(cfg: &RunConfig) -> Result<()> {
    let mut ws = Workspace::open(&cfg.out)?;
    let ds = cfg.load_dataset()?;
    let train = build_sft_dataset(&cfg.model, &ds, Split::Train)?;
    let dev = build_sft_dataset(&cfg.model, &ds, Split::Dev)?;
    println!(
        "task: {} docs / {} train pairs / {} dev pairs",
        ds.pool.len(),
        train.len(),
        dev.len()
    );

    let mut params: ParamSet<f32> = init_params(&cfg.model, cfg.seed)?;
    let hyper = SftHyper {
        lr: cfg.lr,
        batch: cfg.batch,
        epochs: if cfg.epochs == 0 { usize::MAX } else { cfg.epochs },
        max_steps: Some(cfg.steps),
        seed: cfg.seed,
        eval_every: cfg.eval_every,
        patience: cfg.patience,
    };
    let report = sft_train(&mut params, &cfg.model, &train, &dev, &hyper)?;
    println!(
        "sft: {} steps, final train CE {:.4}, best dev CE {}",
        report.steps,
        report.train_curve.last().map_or(f64::NAN, |p| p.value),
        report.best_dev_ce.map_or("n/a".into(), |c| format!("{c:.4}")),
    );

    let mut curve = String::from("step,split,ce\n");
    for p in &report.train_curve {
        curve.push_str(&format!("{},train,{:.9}\n", p.step, p.value));
    }
    for p in &report.dev_curve {
        curve.push_str(&format!("{},dev,{:.9}\n", p.step, p.value));
    }

    params.freeze_all();
    let meta = serde_json::json!({
        "role": "teacher",
        "template_hash": template_hash(&cfg.model),
        "sft_steps": report.steps,
        "best_dev_ce": report.best_dev_ce,
        "seed": cfg.seed,
    });
    let ckpt = checkpoint_to_string(&cfg.model, &params, meta)?;

    ws.put(CONFIG_FILE, cfg.to_flat_string().as_bytes(), "train-teacher", &[])?;
    ws.put(TEACHER_CKPT, ckpt.as_bytes(), "train-teacher", &[])?;
    ws.put(TEACHER_CURVE, curve.as_bytes(), "train-teacher", &[])?;
    println!("wrote {} and {}", ws.path_of(TEACHER_CKPT).display(), ws.path_of(TEACHER_CURVE).display());
    Ok(())
}

fn load_teacher(ws: &Workspace, cfg: &RunConfig) -> Result<Checkpoint<f32>> {
    let bytes = ws.get_verified(TEACHER_CKPT)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::validation("teacher checkpoint is not valid UTF-8"))?;
    let ckpt: Checkpoint<f32> = checkpoint_from_str(&text)?;
    if ckpt.config != cfg.model {
        return Err(Error::usage(format!(
            "model config mismatch: checkpoint was trained at d={}, L_D_max={} but the run \
             config asks for d={}, L_D_max={}; align the config with the checkpoint",
            ckpt.config.d_model, ckpt.config.l_d_max, cfg.model.d_model, cfg.model.l_d_max
        )));
    }
    Ok(ckpt)
}

/// Encode the document pool with the frozen teacher backbone into the cache.
pub fn cmd_index(cfg: &RunConfig) -> Result<()> {
    let mut ws = Workspace::open(&cfg.out)?;
    let mut teacher = load_teacher(&ws, cfg)?;
    teacher.params.freeze_all();
    let ds = cfg.load_dataset()?;
    let cache = index_documents(&teacher.params, &teacher.config, &ds.pool)?;
    let text = cache_to_string(&cache)?;
    ws.put(CONFIG_FILE, cfg.to_flat_string().as_bytes(), "index", &[])?;
    ws.put(CACHE_FILE, text.as_bytes(), "index", &[TEACHER_CKPT])?;
    println!("indexed {} documents into {}", cache.len(), ws.path_of(CACHE_FILE).display());
    Ok(())
}

fn load_cache_verified(ws: &Workspace) -> Result<DocCache<f32>> {
    let bytes = ws.get_verified(CACHE_FILE)?;
    let text =
        String::from_utf8(bytes).map_err(|_| Error::validation("cache file is not valid UTF-8"))?;
    cache_from_str(&text)
}

/// Distill the predictor against the frozen teacher; writes θ and curves.
pub fn cmd_distill(cfg: &RunConfig) -> Result<()> {
    let mut ws = Workspace::open(&cfg.out)?;
    let teacher = load_teacher(&ws, cfg)?;
    let cache = load_cache_verified(&ws)?;
    let ds = cfg.load_dataset()?;
    let pairs = training_pairs(&ds, Split::Train);

    let mut theta = init_predictor(cfg.model.d_model, cfg.pred_layers, cfg.seed)?;
    let hyper = DistillHyper {
        w: cfg.w,
        lr: cfg.lr,
        batch: cfg.batch,
        steps: cfg.steps,
        seed: cfg.seed,
    };
    let report = train_student(
        &teacher.params,
        &teacher.config,
        &mut theta,
        &cache,
        &ds,
        &pairs,
        &hyper,
        cfg.variant,
        cfg.predict_span,
    )?;
    let last = report.curve.last();
    println!(
        "distilled {} steps ({} pairs/step): final mse {:.6}, kl {:.6}",
        report.steps,
        cfg.batch,
        last.map_or(f64::NAN, |p| p.mse),
        last.map_or(f64::NAN, |p| p.kl),
    );

    let scfg = student_config_for(cfg.variant, cfg.predict_span);
    let meta = serde_json::json!({
        "role": "student-predictor",
        "variant": cfg.variant.to_string(),
        "predict_span": cfg.predict_span.to_string(),
        "use_doc_mul": scfg.use_doc_mul,
        "w": cfg.w,
        "steps": report.steps,
        "seed": cfg.seed,
        "pred_layers": cfg.pred_layers,
        "teacher_params_hash": teacher.params_hash,
    });
    let ckpt = checkpoint_to_string(&teacher.config, &theta, meta)?;
    let curve = distill_curve_csv(&report.curve, cfg.variant, cfg.seed);

    ws.put(CONFIG_FILE, cfg.to_flat_string().as_bytes(), "distill", &[])?;
    ws.put(THETA_CKPT, ckpt.as_bytes(), "distill", &[TEACHER_CKPT, CACHE_FILE])?;
    ws.put(DISTILL_CURVE, curve.as_bytes(), "distill", &[TEACHER_CKPT, CACHE_FILE])?;
    println!("wrote {}", ws.path_of(THETA_CKPT).display());
    Ok(())
}

/// Student configuration recorded at distillation time, falling back to the
/// run config when a hand-written θ lacks the metadata.
fn student_cfg_from_meta(meta: &serde_json::Value, cfg: &RunConfig) -> Result<StudentConfig> {
    let variant = match meta.get("variant").and_then(|v| v.as_str()) {
        Some(s) => s.parse::<AblationVariant>()?,
        None => cfg.variant,
    };
    let span = match meta.get("predict_span").and_then(|v| v.as_str()) {
        Some(s) => s.parse::<PredictSpan>()?,
        None => cfg.predict_span,
    };
    Ok(student_config_for(variant, span))
}

#[derive(Debug, Serialize)]
struct QueryHit {
    rank: usize,
    doc_id: String,
    relevance: f64,
}

#[derive(Debug, Serialize)]
struct QueryResult {
    query: String,
    k: usize,
    score_mode: String,
    results: Vec<QueryHit>,
}

/// Rank the cached pool for one query; prints hits and writes JSON.
pub fn cmd_query(cfg: &RunConfig, query_text: &str) -> Result<()> {
    let mut ws = Workspace::open(&cfg.out)?;
    let teacher = load_teacher(&ws, cfg)?;
    let cache = load_cache_verified(&ws)?;
    let theta_text = String::from_utf8(ws.get_verified(THETA_CKPT)?)
        .map_err(|_| Error::validation("predictor checkpoint is not valid UTF-8"))?;
    let theta: Checkpoint<f32> = checkpoint_from_str(&theta_text)?;
    let scfg = student_cfg_from_meta(&theta.meta, cfg)?;

    let query = tokenize(&cfg.model, query_text);
    let ranked = retrieve(
        &teacher.params,
        &teacher.config,
        &theta.params,
        &scfg,
        &cache,
        &query,
        cfg.k,
        cfg.score_mode,
    )?;

    let mut hits = Vec::with_capacity(ranked.len());
    for (rank, (doc_id, relevance)) in ranked.iter().enumerate() {
        println!("{}\t{}\t{:.6}", rank + 1, doc_id, relevance);
        hits.push(QueryHit { rank: rank + 1, doc_id: doc_id.clone(), relevance: *relevance });
    }
    let result = QueryResult {
        query: query_text.to_string(),
        k: cfg.k,
        score_mode: cfg.score_mode.to_string(),
        results: hits,
    };
    let json = serde_json::to_string_pretty(&result)
        .map_err(|e| Error::structural(format!("query result serialization failed: {e}")))?;
    ws.put(CONFIG_FILE, cfg.to_flat_string().as_bytes(), "query", &[])?;
    ws.put(QUERY_RESULT, json.as_bytes(), "query", &[TEACHER_CKPT, CACHE_FILE, THETA_CKPT])?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct PhaseSummary {
    phase: String,
    sizes: Vec<usize>,
    medians_us: Vec<f64>,
    slope: f64,
    r2: f64,
}

fn phase_summary(phase: Phase, sizes: &[usize], records: &[TimingRecord]) -> Result<PhaseSummary> {
    let medians: Vec<f64> =
        records.iter().filter(|r| r.phase == phase).map(|r| r.median_us).collect();
    let fit: SlopeFit = fit_loglog_slope(sizes, &medians)?;
    Ok(PhaseSummary {
        phase: phase.to_string(),
        sizes: sizes.to_vec(),
        medians_us: medians,
        slope: fit.slope,
        r2: fit.r2,
    })
}

fn random_text(len: usize, seed: u64) -> String {
    // Deterministic filler bytes in the printable lowercase range; timing
    // does not depend on the byte values, only the length.
    (0..len).map(|i| (b'a' + ((seed as usize + i * 7) % 26) as u8) as char).collect()
}

/// Measure per-phase latencies across document lengths and fit exponents.
///
/// Timing is weight-independent, so each document length gets a fresh
/// randomly initialized backbone at that `L_D_max`; the command still
/// requires trained artifacts so that reported numbers always correspond to
/// a pipeline that actually ran end to end.
pub fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let mut ws = Workspace::open(&cfg.out)?;
    load_teacher(&ws, cfg)?;
    load_cache_verified(&ws)?;
    ws.get_verified(THETA_CKPT)?;

    let mut records: Vec<TimingRecord> = Vec::new();
    for &l_d in &BENCH_DOC_SIZES {
        let bench_cfg = LMConfig {
            l_d_max: l_d,
            max_window: l_d + 192,
            ..cfg.model.clone()
        };
        bench_cfg.validate()?;
        let mut params: ParamSet<f32> = init_params(&bench_cfg, cfg.seed)?;
        params.freeze_all();
        let theta = {
            let mut t = init_predictor(bench_cfg.d_model, cfg.pred_layers, cfg.seed)?;
            t.freeze_all();
            t
        };
        let doc = tokenize(&bench_cfg, &random_text(l_d, cfg.seed));
        let query = tokenize(&bench_cfg, &random_text(BENCH_QUERY_LEN, cfg.seed + 1));

        let padded = pad_document(&bench_cfg, &doc);
        records.push(measure_rt(
            || {
                encode(&params, &bench_cfg, &padded, 0).expect("doc encode");
            },
            Phase::OfflineDocEncode,
            l_d,
            BENCH_REPS,
        ));

        records.push(measure_rt(
            || {
                crate::student::encode_query_solo(&params, &bench_cfg, &query)
                    .expect("solo query encode");
            },
            Phase::OnlineQuery,
            l_d,
            BENCH_REPS,
        ));

        let entry = {
            let cache = index_documents(
                &params,
                &bench_cfg,
                &[crate::datagen::DocRec { id: "bench".into(), text: random_text(l_d, cfg.seed) }],
            )?;
            cache.entries[0].clone()
        };
        let solo = crate::student::encode_query_solo(&params, &bench_cfg, &query)?;
        records.push(measure_rt(
            || {
                let predicted =
                    predictor_forward(&theta, &solo.states, &entry.z).expect("predictor");
                student_score(&params, &bench_cfg, &entry, &predicted, cfg.score_mode)
                    .expect("student score");
            },
            Phase::OnlinePerDoc,
            l_d,
            BENCH_REPS,
        ));

        records.push(measure_rt(
            || {
                teacher_score(&params, &bench_cfg, &doc, &query, cfg.score_mode)
                    .expect("teacher score");
            },
            Phase::TeacherOnline,
            l_d,
            BENCH_REPS,
        ));
    }

    let sizes = BENCH_DOC_SIZES.to_vec();
    let summaries = vec![
        phase_summary(Phase::OfflineDocEncode, &sizes, &records)?,
        phase_summary(Phase::OnlineQuery, &sizes, &records)?,
        phase_summary(Phase::OnlinePerDoc, &sizes, &records)?,
        phase_summary(Phase::TeacherOnline, &sizes, &records)?,
    ];
    for s in &summaries {
        println!("{}: slope {:.3} (r2 {:.3})", s.phase, s.slope, s.r2);
    }

    let json = serde_json::to_string_pretty(&summaries)
        .map_err(|e| Error::structural(format!("bench summary serialization failed: {e}")))?;
    ws.put(CONFIG_FILE, cfg.to_flat_string().as_bytes(), "bench", &[])?;
    ws.put(
        BENCH_TIMINGS,
        timings_to_csv(&records).as_bytes(),
        "bench",
        &[TEACHER_CKPT, CACHE_FILE, THETA_CKPT],
    )?;
    ws.put(
        BENCH_SUMMARY,
        json.as_bytes(),
        "bench",
        &[TEACHER_CKPT, CACHE_FILE, THETA_CKPT],
    )?;
    Ok(())
}

/// Rank the full cached pool for every query of a split with the student.
pub fn eval_student(
    backbone: &ParamSet<f32>,
    model: &LMConfig,
    theta: &ParamSet<f32>,
    scfg: &StudentConfig,
    cache: &DocCache<f32>,
    ds: &RetrievalDataset,
    split: Split,
    mode: ScoreMode,
) -> Result<RunMetrics> {
    let queries = ds.queries_in(split);
    if queries.is_empty() {
        return Err(Error::structural(format!("no queries in split {split:?}")));
    }
    let mut ids = Vec::new();
    let mut rankings = Vec::new();
    let mut positives = Vec::new();
    for q in queries {
        let ranked = retrieve(
            backbone,
            model,
            theta,
            scfg,
            cache,
            &tokenize(model, &q.text),
            cache.len(),
            mode,
        )?;
        ids.push(q.id.clone());
        rankings.push(ranked.into_iter().map(|(id, _)| id).collect::<Vec<_>>());
        positives.push(ds.positives_of(&q.id).cloned().unwrap_or_default());
    }
    compute_metrics(&ids, &rankings, &positives, &[1, 2, 4], cache.len())
}

/// Rank the full pool for every query of a split with the teacher.
pub fn eval_teacher(
    params: &ParamSet<f32>,
    model: &LMConfig,
    ds: &RetrievalDataset,
    split: Split,
    mode: ScoreMode,
) -> Result<RunMetrics> {
    let queries = ds.queries_in(split);
    if queries.is_empty() {
        return Err(Error::structural(format!("no queries in split {split:?}")));
    }
    let pool: Vec<(String, TokenSeq)> =
        ds.pool.iter().map(|d| (d.id.clone(), tokenize(model, &d.text))).collect();
    let mut ids = Vec::new();
    let mut rankings = Vec::new();
    let mut positives: Vec<BTreeSet<String>> = Vec::new();
    for q in queries {
        let ranked = teacher_rank_pool(params, model, &pool, &tokenize(model, &q.text), mode)?;
        ids.push(q.id.clone());
        rankings.push(ranked.into_iter().map(|(id, _)| id).collect::<Vec<_>>());
        positives.push(ds.positives_of(&q.id).cloned().unwrap_or_default());
    }
    compute_metrics(&ids, &rankings, &positives, &[1, 2, 4], ds.pool.len())
}

fn distill_and_eval(
    teacher: &Checkpoint<f32>,
    cache: &DocCache<f32>,
    ds: &RetrievalDataset,
    pairs: &[crate::datagen::LabeledPair],
    cfg: &RunConfig,
    variant: AblationVariant,
    pred_layers: usize,
    w: f64,
) -> Result<RunMetrics> {
    let mut theta = init_predictor(cfg.model.d_model, pred_layers, cfg.seed)?;
    let hyper =
        DistillHyper { w, lr: cfg.lr, batch: cfg.batch, steps: cfg.steps, seed: cfg.seed };
    train_student(
        &teacher.params,
        &teacher.config,
        &mut theta,
        cache,
        ds,
        pairs,
        &hyper,
        variant,
        cfg.predict_span,
    )?;
    theta.freeze_all();
    let scfg = student_config_for(variant, cfg.predict_span);
    eval_student(
        &teacher.params,
        &teacher.config,
        &theta,
        &scfg,
        cache,
        ds,
        Split::Test,
        cfg.score_mode,
    )
}

/// Distill every loss variant from scratch and tabulate test metrics.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let mut ws = Workspace::open(&cfg.out)?;
    let teacher = load_teacher(&ws, cfg)?;
    let cache = load_cache_verified(&ws)?;
    let ds = cfg.load_dataset()?;
    let pairs = training_pairs(&ds, Split::Train);

    let mut csv = String::from("variant,r_at_1,r_at_2,r_at_4,mrr\n");
    for &variant in AblationVariant::ALL.iter() {
        let m = distill_and_eval(&teacher, &cache, &ds, &pairs, cfg, variant, cfg.pred_layers, cfg.w)?;
        println!(
            "{:<14} R@1 {:.3}  R@2 {:.3}  R@4 {:.3}  MRR {:.3}",
            variant.label(),
            m.recall_at[&1],
            m.recall_at[&2],
            m.recall_at[&4],
            m.mrr
        );
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            variant.label(),
            m.recall_at[&1],
            m.recall_at[&2],
            m.recall_at[&4],
            m.mrr
        ));
    }
    ws.put(CONFIG_FILE, cfg.to_flat_string().as_bytes(), "ablate", &[])?;
    ws.put(ABLATION_TABLE, csv.as_bytes(), "ablate", &[TEACHER_CKPT, CACHE_FILE])?;
    println!("wrote {}", ws.path_of(ABLATION_TABLE).display());
    Ok(())
}

/// Sweep (w, predictor depth) over a fixed grid; the best R@1 cell wins.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let mut ws = Workspace::open(&cfg.out)?;
    let teacher = load_teacher(&ws, cfg)?;
    let cache = load_cache_verified(&ws)?;
    let ds = cfg.load_dataset()?;
    let pairs = training_pairs(&ds, Split::Train);

    let mut rows: Vec<(f64, usize, f64, f64)> = Vec::new();
    for &w in SWEEP_W_GRID.iter() {
        for &depth in SWEEP_DEPTH_GRID.iter() {
            let m = distill_and_eval(
                &teacher,
                &cache,
                &ds,
                &pairs,
                cfg,
                AblationVariant::Full,
                depth,
                w,
            )?;
            println!("w={w:<5} layers={depth}  R@1 {:.3}  MRR {:.3}", m.recall_at[&1], m.mrr);
            rows.push((w, depth, m.recall_at[&1], m.mrr));
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .max_by(|(ai, a), (bi, b)| {
            a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal).then(bi.cmp(ai))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut csv = String::from("w,pred_layers,r_at_1,mrr,best\n");
    for (i, (w, depth, r1, mrr)) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{w},{depth},{r1:.6},{mrr:.6},{}\n",
            if i == best { 1 } else { 0 }
        ));
    }
    ws.put(CONFIG_FILE, cfg.to_flat_string().as_bytes(), "sweep", &[])?;
    ws.put(SWEEP_TABLE, csv.as_bytes(), "sweep", &[TEACHER_CKPT, CACHE_FILE])?;
    println!("wrote {}", ws.path_of(SWEEP_TABLE).display());
    Ok(())
}
