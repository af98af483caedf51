//! Lyapunov spectrum of a trained reservoir running in closed loop, compared
//! with the spectrum of the system it was trained on.

use ergodic_rc::dynamics::{generate_trajectory, IntegrationConfig, Normalizer, SystemSpec};
use ergodic_rc::evaluation::compare_invariants;
use ergodic_rc::invariants::{lyapunov_spectrum_ode, LeConfig};
use ergodic_rc::reservoir::ReservoirParams;
use ergodic_rc::training::TrainedModel;

fn main() -> ergodic_rc::Result<()> {
    let system = SystemSpec::lorenz96(10, 8.0)?;
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps: 20_000,
        n_transient: 2_000,
        seed: 5,
    };
    let u0 = system.random_initial_condition(cfg.seed);
    let raw = generate_trajectory(&system, &u0, &cfg)?;
    let train = Normalizer::fit(&raw)?.normalize(&raw);

    let params = ReservoirParams {
        size: 400,
        density: 0.15,
        spectral_radius: 0.2,
        input_scale: 0.02,
        bias: -0.5,
        leak_rate: 0.7,
        beta: 1e-9,
    };
    let model = TrainedModel::train(&params, &train, 200, 3)?;
    let rc = model.spectrum(10, 20_000, 2_000)?;
    let truth = lyapunov_spectrum_ode(&system, &u0, &LeConfig::new(cfg.dt, 300_000, 10))?;

    println!("{:>4} {:>10} {:>10}", "i", "reservoir", "truth");
    for (i, (a, b)) in rc.exponents().iter().zip(truth.exponents()).enumerate() {
        println!("{:>4} {a:>10.4} {b:>10.4}", i + 1);
    }
    let diff = compare_invariants(&rc, &truth)?;
    println!(
        "lambda1 relative error {:.1}%, KY {:.3} vs {:.3}",
        100.0 * diff.lambda1_relative_error,
        diff.ky_model,
        diff.ky_truth
    );
    Ok(())
}
