//! Why reverse KL for distillation? A brute-force demonstration of the
//! asymmetry between the two KL directions.
//!
//! The student family is deliberately too small to match the teacher: single
//! softened one-hots (one mode only), plus a widened two-component mixture
//! family that the forward direction is allowed to use. Minimizing each
//! direction by exhaustive search shows the classic picture:
//!
//! - reverse KL (student ‖ teacher) picks the teacher's dominant mode and
//!   commits to it — mode seeking;
//! - forward KL (teacher ‖ student) prefers to spread mass across modes —
//!   mean seeking — which for a ranking task means hedged, blurrier scores.
//!
//!     cargo run --release --example mode_seeking
//!     cargo run --release --example mode_seeking -- --second-mass 0.45

use clap::Parser;

use jepa_ir::distill::{mode_seeking_demo, MODE_TEMPERATURE};

#[derive(Parser, Debug)]
#[command(about = "Brute-force the two KL directions over constrained student families")]
struct Args {
    /// Probability of the teacher's second-best outcome; the rest of the
    /// mass (minus the top outcome at 0.6 scale) spreads over the tail.
    #[arg(long, default_value_t = 0.4)]
    second_mass: f64,
    /// Number of outcomes in the toy vocabulary.
    #[arg(long, default_value_t = 8)]
    outcomes: usize,
    /// Softened one-hot temperature for the student family.
    #[arg(long, default_value_t = MODE_TEMPERATURE)]
    temperature: f64,
}

fn print_dist(label: &str, p: &[f64]) {
    let entries: Vec<String> = p.iter().map(|v| format!("{v:.3}")).collect();
    println!("{label:<24} [{}]", entries.join(", "));
}

fn main() -> jepa_ir::Result<()> {
    env_logger::init();
    let args = Args::parse();

    // A bimodal-ish teacher: one dominant mode, one strong runner-up, a
    // thin tail — the shape where the two directions disagree most visibly.
    let tail = (1.0 - 0.6 - args.second_mass).max(0.0) / (args.outcomes - 2) as f64;
    let mut teacher = vec![tail; args.outcomes];
    teacher[0] = 0.6;
    teacher[1] = args.second_mass;
    let norm: f64 = teacher.iter().sum();
    for p in &mut teacher {
        *p /= norm;
    }

    print_dist("teacher", &teacher);
    let result = mode_seeking_demo(&teacher, args.temperature)?;

    println!("\nnarrow family (single softened one-hot):");
    println!(
        "  reverse KL minimizer: mode {} (KL {:.4})",
        result.reverse_argmax, result.reverse_kl_at_min
    );
    println!(
        "  forward KL minimizer: mode {} (KL {:.4})",
        result.forward_argmax, result.forward_kl_at_min
    );

    let fwd = &result.forward_solution;
    println!("\nwidened family (two-component mixture), forward KL:");
    println!(
        "  components ({}, {}), weight {:.2} on the first (KL {:.4})",
        fwd.locations.0, fwd.locations.1, fwd.weight, fwd.kl
    );
    print_dist("  induced student", &fwd.induced);

    println!(
        "\ntotal variation between the reverse pick and the forward mixture: {:.3}",
        result.divergence_between_solutions
    );
    println!(
        "reverse commits to the top mode; forward hedges across {} modes.",
        if fwd.weight > 0.05 && fwd.weight < 0.95 { "two" } else { "one" }
    );
    Ok(())
}
