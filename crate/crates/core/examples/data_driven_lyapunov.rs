//! Largest Lyapunov exponent from a sampled trajectory, checked against the
//! tangent-linear value.

use ergodic_rc::dynamics::{generate_trajectory, IntegrationConfig, SystemSpec, TimeSeries};
use ergodic_rc::invariants::{largest_le_from_data, lyapunov_spectrum_ode, LeConfig, RosensteinConfig};

fn main() -> ergodic_rc::Result<()> {
    let system = SystemSpec::lorenz96(10, 8.0)?;
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps: 100_000,
        n_transient: 2_000,
        seed: 4,
    };
    let u0 = system.random_initial_condition(cfg.seed);
    let series = generate_trajectory(&system, &u0, &cfg)?;

    let rc = RosensteinConfig::default_for(&series, 10)?;
    println!(
        "embedding {} x delay {}, Theiler window {}, fit over steps {:?}",
        rc.embed_dim, rc.delay, rc.theiler_window, rc.fit_range
    );
    let from_data = largest_le_from_data(&series, &rc)?;
    let tangent = lyapunov_spectrum_ode(&system, &u0, &LeConfig::new(cfg.dt, 100_000, 1))?;
    let truth = tangent.exponents()[0];
    println!("data estimate {from_data:.4}, tangent-linear {truth:.4}, relative error {:.1}%",
        100.0 * (from_data - truth).abs() / truth);

    let sine: Vec<f64> = (0..20_000).map(|i| (i as f64 * 0.02).sin()).collect();
    let sine = TimeSeries::new(0.01, 1, sine)?;
    let rc = RosensteinConfig::default_for(&sine, 2)?;
    println!("periodic signal: {:.4}", largest_le_from_data(&sine, &rc)?);
    Ok(())
}
