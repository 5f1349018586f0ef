//! Finite-difference verification of every gradient this crate trains with.
//!
//! Two losses are checked at 64-bit against central differences:
//!
//! 1. the teacher objective — answer-position cross-entropy through
//!    embeddings, attention, layer norms, MLPs and the untied head, with
//!    respect to every parameter group;
//! 2. the distillation objective — span MSE plus weighted reverse KL —
//!    with respect to the predictor weights θ only, with the backbone and
//!    head entering the tape as constants, exactly as training does.
//!
//! The closure style below is the same contract `grad_check` imposes on any
//! caller: evaluate the loss at given parameters, optionally with analytic
//! gradients. The checker also evaluates the base point twice and insists
//! on bitwise agreement, so nondeterministic losses are caught before they
//! can masquerade as gradient bugs.
//!
//!     cargo run --release --example grad_check

use clap::Parser;

use jepa_ir::datagen::{synth_task, SynthRule};
use jepa_ir::numcore::{grad_check, GradCheckReport, ParamSet, Tape, Tensor};
use jepa_ir::student::{encode_query_solo, index_documents, init_predictor, predictor_depth};
use jepa_ir::teacher::{render_instruction, teacher_targets, TeacherTargets};
use jepa_ir::tinylm::{init_params, tokenize, LMConfig, LmGraph, TokenSeq};

#[derive(Parser, Debug)]
#[command(about = "Check analytic gradients against central differences at 64-bit")]
struct Args {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Maximum relative error tolerated.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn report_line(label: &str, report: &GradCheckReport, tol: f64) {
    let verdict = if report.passes(tol) { "ok" } else { "FAIL" };
    println!(
        "{label:<28} max rel err {:.3e} over {} elements  [{verdict}]",
        report.max, report.elements_checked
    );
    let mut worst: Vec<(&String, &f64)> = report.per_group.iter().collect();
    worst.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap());
    for (group, err) in worst.iter().take(3) {
        println!("    {group:<24} {err:.3e}");
    }
}

fn teacher_ce_check(args: &Args) -> jepa_ir::Result<GradCheckReport> {
    let cfg = LMConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 2,
        max_window: 160,
        l_d_max: 8,
        ..LMConfig::default()
    };
    let params: ParamSet<f64> = init_params(&cfg, args.seed)?;
    let render =
        render_instruction(&cfg, &tokenize(&cfg, "RULE AB"), &tokenize(&cfg, "bi du"))?;
    let toks: TokenSeq = render.tokens.clone();
    let answer = render.answer_position;

    grad_check(
        |p, want| {
            let mut g = LmGraph::new(p, &cfg, true);
            let states = g.encode(&toks, 0)?;
            let logits = g.lm_head_at(states, answer)?;
            let loss = g.tape.cross_entropy_logits(logits, cfg.true_id)?;
            let value = g.tape.value(loss).scalar_value();
            if want {
                let grads = g.tape.backward(loss)?;
                Ok((value, Some(grads)))
            } else {
                Ok((value, None))
            }
        },
        &params,
        args.eps,
    )
}

fn distill_theta_check(args: &Args) -> jepa_ir::Result<GradCheckReport> {
    let cfg = LMConfig { d_model: 8, n_heads: 2, n_layers: 1, ..LMConfig::default() };
    let mut backbone: ParamSet<f64> = init_params(&cfg, args.seed + 1)?;
    backbone.freeze_all();
    let ds = synth_task(&SynthRule::default(), 2, 1, 1)?;
    let cache = index_documents(&backbone, &cfg, &ds.pool)?;

    // Everything that does not depend on θ is precomputed: solo query
    // states, cached document latents, frozen teacher targets.
    let mut fixed: Vec<(Tensor<f64>, Tensor<f64>, TeacherTargets<f64>)> = Vec::new();
    for (query, doc) in [("bi ca rose", "d0"), ("wavy bi du", "d1")] {
        let solo = encode_query_solo(&backbone, &cfg, &tokenize(&cfg, query))?.states;
        let z = cache.get(doc).expect("indexed").z.clone();
        let doc_text = ds.pool.iter().find(|d| d.id == doc).unwrap().text.clone();
        let targets =
            teacher_targets(&backbone, &cfg, &tokenize(&cfg, &doc_text), &tokenize(&cfg, query))?;
        fixed.push((solo, z, targets));
    }

    let theta: ParamSet<f64> = init_predictor(cfg.d_model, 2, args.seed + 2)?;
    let depth = predictor_depth(&theta);
    let w = 0.25;

    grad_check(
        |theta_now, want| {
            let mut tape: Tape<f64> = Tape::new();
            // θ enters as parameters; backbone head as constants — the
            // same gradient isolation the trainer uses.
            let head_w = tape.constant(backbone.get("head.w")?.clone());
            let head_b = tape.constant(backbone.get("head.b")?.clone());
            let mut totals = Vec::new();
            for (solo, z, targets) in &fixed {
                let mut x = tape.constant(solo.clone());
                for l in 0..depth {
                    let lw = tape.param(theta_now, &format!("pred.{l}.w"))?;
                    let lb = tape.param(theta_now, &format!("pred.{l}.b"))?;
                    x = tape.linear(x, lw, lb)?;
                    if l + 1 < depth {
                        x = tape.relu(x);
                    }
                }
                let predicted = tape.mul_rows_const(x, z)?;
                let mse = tape.mse_const(predicted, &targets.query_states)?;
                let last = tape.value(predicted).rows() - 1;
                let final_row = tape.slice_rows(predicted, last..last + 1)?;
                let logits = tape.linear(final_row, head_w, head_b)?;
                let kl = tape.reverse_kl_logits(logits, &targets.answer_probs)?;
                totals.push(tape.add_scaled(mse, kl, w)?);
            }
            let loss = tape.mean_scalars(&totals)?;
            let value = tape.value(loss).scalar_value();
            if want {
                let grads = tape.backward(loss)?;
                Ok((value, Some(grads)))
            } else {
                Ok((value, None))
            }
        },
        &theta,
        args.eps,
    )
}

fn main() -> jepa_ir::Result<()> {
    env_logger::init();
    let args = Args::parse();

    let teacher_report = teacher_ce_check(&args)?;
    report_line("teacher CE (all groups)", &teacher_report, args.tol);

    let distill_report = distill_theta_check(&args)?;
    report_line("distill loss (theta only)", &distill_report, args.tol);

    if teacher_report.passes(args.tol) && distill_report.passes(args.tol) {
        println!("\nall gradients within {:.0e} of central differences", args.tol);
        Ok(())
    } else {
        println!("\nGRADIENT MISMATCH");
        std::process::exit(1);
    }
}
