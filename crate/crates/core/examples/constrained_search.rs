//! Small-budget comparison of an unconstrained search with one that is also
//! given the largest Lyapunov exponent of the data.
//!
//! The full protocol is `ergodic-rc compare --config configs/l96_limited.toml`;
//! this example shrinks every budget so it finishes in a few minutes.

use ergodic_rc::harness::{run_comparison, ExperimentConfig, InvariantsProvided};

fn main() -> ergodic_rc::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = std::env::temp_dir().join("ergodic-rc-constrained-search");
    cfg.reservoir.size = 200;
    cfg.cma.max_generations = 4;
    cfg.evaluation.n_ics = 50;
    cfg.evaluation.truth_le_steps = 100_000;

    let variants = [InvariantsProvided::None, InvariantsProvided::Les(1)];
    let report = run_comparison(&cfg, &variants, 2)?;
    let truth = report.truth_spectrum.exponents()[0];
    println!("true lambda1 = {truth:.4}");
    for row in &report.rows {
        let init = row.init.map_or("mean".to_string(), |i| format!("init {i}"));
        println!(
            "{:<6} {:<7} VPT mean {:.2} median {:.2}  RC lambda1 {:.3}",
            row.variant.to_string(),
            init,
            row.mean_vpt,
            row.median_vpt,
            row.rc_lambda1
        );
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}
