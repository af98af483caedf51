//! Integrates Lorenz 96 and writes the trajectory as CSV.
//!
//! cargo run --release --example trajectory -- [out.csv]

use ergodic_rc::dynamics::{generate_trajectory, IntegrationConfig, Normalizer, SystemSpec};
use ergodic_rc::harness::{write_series_csv, Metadata};

fn main() -> ergodic_rc::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "l96_trajectory.csv".into());
    let system = SystemSpec::lorenz96(10, 8.0)?;
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps: 20_000,
        n_transient: 2_000,
        seed: 1,
    };
    let u0 = system.random_initial_condition(cfg.seed);
    let series = generate_trajectory(&system, &u0, &cfg)?;

    let stats = Normalizer::fit(&series)?;
    println!("{} steps of {} sites, max |u| = {:.3}", series.len(), series.dim(), series.max_abs());
    println!("mean per site: {:.3?}", stats.mean);
    println!("std per site:  {:.3?}", stats.std);

    write_series_csv(out.as_ref(), &series, &Metadata::default().with("system", "lorenz96"))?;
    println!("wrote {out}");
    Ok(())
}
