use std::collections::BTreeMap;

use jepa_ir::datagen::{synth_task, Split, SynthRule};
use jepa_ir::distill::{train_student, training_pairs, AblationVariant, DistillHyper};
use jepa_ir::evalx::compute_metrics;
use jepa_ir::numcore::ParamSet;
use jepa_ir::student::{
    encode_query_solo, index_documents, init_predictor, predictor_forward, retrieve,
    student_score, PredictSpan, StudentConfig,
};
use jepa_ir::teacher::{teacher_targets, ScoreMode};
use jepa_ir::tinylm::{load_checkpoint, tokenize};

fn main() -> jepa_ir::Result<()> {
    let ckpt = load_checkpoint::<f32>(std::path::Path::new("/tmp/teacher_v5.json"))?;
    let (cfg, mut params) = (ckpt.config, ckpt.params);
    params.freeze_all();
    let ds = synth_task(&SynthRule::default(), 200, 50, 100)?;
    let cache = index_documents(&params, &cfg, &ds.pool)?;
    let mut theta: ParamSet<f32> = init_predictor(cfg.d_model, 2, 0)?;
    let pairs = training_pairs(&ds, Split::Train);
    let hyper = DistillHyper { w: 0.25, lr: 1e-3, batch: 16, steps: 1500, seed: 0 };
    let rep = train_student(&params, &cfg, &mut theta, &cache, &ds, &pairs, &hyper,
        AblationVariant::Full, PredictSpan::Full)?;
    let last = rep.curve.last().unwrap();
    println!("final batch: mse {:.4} kl {:.4}", last.mse, last.kl);

    let scfg = StudentConfig::new();
    for split in [Split::Train, Split::Test] {
        let qs = ds.queries_in(split);
        let mut ids = Vec::new();
        let mut rankings: Vec<Vec<String>> = Vec::new();
        let mut positives = Vec::new();
        // mean per-pair losses, split by label
        let (mut kl_pos, mut kl_neg, mut mse_pos, mut mse_neg) = (0.0, 0.0, 0.0, 0.0);
        let (mut n_pos, mut n_neg) = (0usize, 0usize);
        let mut hits_by_type: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for q in &qs {
            let qtok = tokenize(&cfg, &q.text);
            let solo = encode_query_solo(&params, &cfg, &qtok)?;
            for d in &ds.pool {
                let entry = cache.get(&d.id).unwrap();
                let predicted = predictor_forward(&theta, &solo.states, &entry.z)?;
                let out = student_score(&params, &cfg, entry, &predicted, ScoreMode::Eq8)?;
                let targets = teacher_targets(&params, &cfg, &tokenize(&cfg, &d.text), &qtok)?;
                let norm = |v: &[f32]| -> Vec<f64> {
                    let s: f64 = v.iter().map(|&x| x as f64).sum();
                    v.iter().map(|&x| x as f64 / s).collect()
                };
                let ps = norm(out.answer_probs.data());
                let pt = norm(targets.answer_probs.data());
                let kl: f64 = ps.iter().zip(&pt).map(|(&a, &b)| {
                    if a > 0.0 { a * (a.ln() - b.max(1e-12).ln()) } else { 0.0 }
                }).sum::<f64>().max(0.0);
                let mse: f64 = out.predicted_query_states.data().iter()
                    .zip(targets.query_states.data())
                    .map(|(&a, &b)| ((a - b) as f64).powi(2))
                    .sum::<f64>() / out.predicted_query_states.data().len() as f64;
                if ds.is_positive(&q.id, &d.id) {
                    kl_pos += kl; mse_pos += mse; n_pos += 1;
                } else {
                    kl_neg += kl; mse_neg += mse; n_neg += 1;
                }
            }
            let ranked = retrieve(&params, &cfg, &theta, &scfg, &cache, &qtok, ds.pool.len(), ScoreMode::Eq8)?;
            let top = ranked[0].0.clone();
            let pos_doc = ds.positives_of(&q.id).unwrap().iter().next().unwrap().clone();
            let e = hits_by_type.entry(pos_doc.clone()).or_insert((0, 0));
            e.1 += 1;
            if top == pos_doc { e.0 += 1; }
            ids.push(q.id.clone());
            rankings.push(ranked.into_iter().map(|(id, _)| id).collect());
            positives.push(ds.positives_of(&q.id).cloned().unwrap_or_default());
        }
        let m = compute_metrics(&ids, &rankings, &positives, &[1, 2], ds.pool.len())?;
        println!("\n{split:?}: R@1 {:.3} R@2 {:.3} MRR {:.3}", m.recall_at[&1], m.recall_at[&2], m.mrr);
        println!("  kl  pos {:.4}  neg {:.4}", kl_pos / n_pos as f64, kl_neg / n_neg as f64);
        println!("  mse pos {:.4}  neg {:.4}", mse_pos / n_pos as f64, mse_neg / n_neg as f64);
        let by: Vec<String> = hits_by_type.iter().map(|(d, (h, t))| format!("{d}:{h}/{t}")).collect();
        println!("  hits by true doc: {}", by.join(" "));
    }
    Ok(())
}
