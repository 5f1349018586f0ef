//! The generative relevance score and why its two published forms rank
//! identically.
//!
//! The teacher answers a binary question; its answer-token probabilities
//! collapse to one scalar. The log-ratio form
//! `s = ln P(T) / (ln P(T) + ln P(F))` is *decreasing* in P(⟨T⟩) — so
//! ranking uses relevance `1 − s` — while the probability-ratio form
//! `P(T) / (P(T) + P(F))` is increasing. On complementary pairs
//! (P(F) = 1 − P(T), i.e. the answer mass renormalized onto the two choice
//! tokens) both are strictly monotone in P(⟨T⟩), so they induce the same
//! ranking on any candidate set; this example verifies that on random draws
//! and prints both curves. With P(T) and P(F) varying independently the
//! equivalence does not hold — a pair like (0.9, 0.05) vs (0.6, 0.01)
//! orders differently under the two rules — which is why rank comparisons
//! here stay on the binary simplex.
//!
//!     cargo run --release --example scoring_rules

use clap::Parser;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jepa_ir::teacher::{relevance_from_score, score_from_probs, ScoreMode};

#[derive(Parser, Debug)]
#[command(about = "Compare the log-ratio and probability-ratio scoring rules")]
struct Args {
    /// Random score sets to compare rankings on.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Candidates per score set.
    #[arg(long, default_value_t = 16)]
    pool: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Indices sorted by descending relevance, ties by index.
fn ranking(mode: ScoreMode, pairs: &[(f64, f64)]) -> Vec<usize> {
    let rel: Vec<f64> =
        pairs.iter().map(|&(t, f)| relevance_from_score(mode, score_from_probs(mode, t, f))).collect();
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.sort_by(|&a, &b| {
        rel[b].partial_cmp(&rel[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    idx
}

fn main() -> jepa_ir::Result<()> {
    env_logger::init();
    let args = Args::parse();

    println!("p_true    s (log-ratio)  relevance 1-s  prob-ratio");
    for i in 1..10 {
        let p_t = i as f64 / 10.0;
        let p_f = 1.0 - p_t;
        let s = score_from_probs(ScoreMode::Eq8, p_t, p_f);
        let pr = score_from_probs(ScoreMode::ProbRatio, p_t, p_f);
        println!("{p_t:.2}      {s:.4}         {:.4}         {pr:.4}", 1.0 - s);
    }
    println!("\nnote the midpoint: s(0.5, 0.5) = {}", score_from_probs(ScoreMode::Eq8, 0.5, 0.5));

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut agreements = 0usize;
    for _ in 0..args.trials {
        let pairs: Vec<(f64, f64)> = (0..args.pool)
            .map(|_| {
                let p_t = rng.gen_range(0.01..0.99);
                (p_t, 1.0 - p_t)
            })
            .collect();
        if ranking(ScoreMode::Eq8, &pairs) == ranking(ScoreMode::ProbRatio, &pairs) {
            agreements += 1;
        }
    }
    println!(
        "\nidentical rankings on {agreements}/{} random complementary pools of {} candidates",
        args.trials, args.pool
    );
    if agreements != args.trials {
        println!("DISAGREEMENT — the two forms are not rank-equivalent here");
        std::process::exit(1);
    }

    // The counterexample from the doc comment: with independent
    // probabilities the two rules really do order differently.
    let free = [(0.9, 0.05), (0.6, 0.01)];
    println!(
        "independent-probability counterexample: eq8 order {:?}, prob-ratio order {:?}",
        ranking(ScoreMode::Eq8, &free),
        ranking(ScoreMode::ProbRatio, &free)
    );
    Ok(())
}
