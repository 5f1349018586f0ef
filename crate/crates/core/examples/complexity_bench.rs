//! Measure how each phase of retrieval scales with document length, and fit
//! the growth exponents from the timings.
//!
//! Four phases, swept over document slot sizes L_D = 64..512 with a fixed
//! 16-byte query:
//!
//!   offline_doc_encode  one-time per-document encode that fills the cache;
//!                       quadratic in L_D (causal attention), but amortized
//!                       across every future query
//!   online_query        per-query solo encode; independent of L_D
//!   online_per_doc      per-candidate work at query time: predictor MLP,
//!                       latent product, head read — independent of L_D
//!   teacher_online      the cross-encoder's per-candidate joint encode;
//!                       quadratic in L_D, paid at query time
//!
//! The story the slopes tell: the student moves the document-length cost
//! offline, so its online path is flat while the teacher's grows
//! quadratically. Model weights do not affect timing, so each size uses a
//! fresh randomly initialized frozen backbone.
//!
//!     cargo run --release --example complexity_bench

use std::collections::BTreeMap;

use clap::Parser;

use jepa_ir::datagen::DocRec;
use jepa_ir::evalx::{fit_loglog_slope, measure_rt, Phase, TimingRecord};
use jepa_ir::numcore::ParamSet;
use jepa_ir::student::{
    encode_query_solo, index_documents, init_predictor, predictor_forward, student_score,
};
use jepa_ir::teacher::{teacher_score, ScoreMode};
use jepa_ir::tinylm::{encode, init_params, pad_document, tokenize, LMConfig};

#[derive(Parser, Debug)]
#[command(about = "Fit per-phase runtime exponents against document length")]
struct Args {
    /// Document slot sizes to sweep (log-spaced; at least 4 spanning 8x).
    #[arg(long, num_args = 1.., default_values_t = [64usize, 128, 256, 512])]
    sizes: Vec<usize>,
    /// Query length in bytes.
    #[arg(long, default_value_t = 16)]
    query_len: usize,
    /// Timed repetitions per cell (after 2 warmup runs).
    #[arg(long, default_value_t = 7)]
    reps: usize,
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn random_text(len: usize, seed: u64) -> String {
    (0..len).map(|i| (b'a' + ((seed as usize + i * 7) % 26) as u8) as char).collect()
}

fn main() -> jepa_ir::Result<()> {
    env_logger::init();
    let args = Args::parse();

    let mut records: Vec<TimingRecord> = Vec::new();
    for &l_d in &args.sizes {
        let cfg = LMConfig {
            d_model: args.d_model,
            l_d_max: l_d,
            max_window: l_d + 192,
            ..Default::default()
        };
        cfg.validate()?;
        let mut params: ParamSet<f32> = init_params(&cfg, args.seed)?;
        params.freeze_all();
        let mut theta = init_predictor(cfg.d_model, 2, args.seed)?;
        theta.freeze_all();

        let doc_text = random_text(l_d, args.seed);
        let doc = tokenize(&cfg, &doc_text);
        let query = tokenize(&cfg, &random_text(args.query_len, args.seed + 1));
        let padded = pad_document(&cfg, &doc);

        records.push(measure_rt(
            || {
                encode(&params, &cfg, &padded, 0).expect("doc encode");
            },
            Phase::OfflineDocEncode,
            l_d,
            args.reps,
        ));
        records.push(measure_rt(
            || {
                encode_query_solo(&params, &cfg, &query).expect("solo query encode");
            },
            Phase::OnlineQuery,
            l_d,
            args.reps,
        ));

        let cache =
            index_documents(&params, &cfg, &[DocRec { id: "bench".into(), text: doc_text }])?;
        let entry = &cache.entries[0];
        let solo = encode_query_solo(&params, &cfg, &query)?;
        records.push(measure_rt(
            || {
                let predicted =
                    predictor_forward(&theta, &solo.states, &entry.z).expect("predictor");
                student_score(&params, &cfg, entry, &predicted, ScoreMode::Eq8)
                    .expect("student score");
            },
            Phase::OnlinePerDoc,
            l_d,
            args.reps,
        ));
        records.push(measure_rt(
            || {
                teacher_score(&params, &cfg, &doc, &query, ScoreMode::Eq8).expect("teacher score");
            },
            Phase::TeacherOnline,
            l_d,
            args.reps,
        ));
        eprintln!("  measured L_D = {l_d}");
    }

    println!("median microseconds per call ({} reps, 2 warmups):\n", args.reps.max(5));
    print!("  {:<20}", "phase \\ L_D");
    for s in &args.sizes {
        print!("{s:>10}");
    }
    println!("{:>9}  {:>6}", "slope", "r2");

    let mut slopes: BTreeMap<String, f64> = BTreeMap::new();
    for phase in
        [Phase::OfflineDocEncode, Phase::OnlineQuery, Phase::OnlinePerDoc, Phase::TeacherOnline]
    {
        let medians: Vec<f64> =
            records.iter().filter(|r| r.phase == phase).map(|r| r.median_us).collect();
        let fit = fit_loglog_slope(&args.sizes, &medians)?;
        print!("  {:<20}", phase.to_string());
        for m in &medians {
            print!("{m:>10.0}");
        }
        println!("{:>9.3}  {:>6.3}", fit.slope, fit.r2);
        slopes.insert(phase.to_string(), fit.slope);
    }

    println!(
        "\nteacher online grows with exponent {:.2}; the student's online phases sit near 0\n\
         ({:.2} per query, {:.2} per candidate) because document-length work happens offline\n\
         at exponent {:.2}, once per document instead of once per (query, document).",
        slopes["teacher_online"],
        slopes["online_query"],
        slopes["online_per_doc"],
        slopes["offline_doc_encode"],
    );
    Ok(())
}
