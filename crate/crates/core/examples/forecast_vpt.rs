//! Trains one reservoir on normalized Lorenz 96 data and measures its valid
//! prediction time on held-out initial conditions.

use ergodic_rc::dynamics::{generate_trajectory, IntegrationConfig, Normalizer, SystemSpec};
use ergodic_rc::evaluation::{
    normalized_rmse, valid_prediction_time, vpt_distribution, ClimateStats, Forecaster, VptConfig,
};
use ergodic_rc::reservoir::ReservoirParams;
use ergodic_rc::training::{truth_range, TrainedModel};

fn main() -> ergodic_rc::Result<()> {
    let system = SystemSpec::lorenz96(10, 8.0)?;
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps: 80_000,
        n_transient: 2_000,
        seed: 11,
    };
    let raw = generate_trajectory(&system, &system.random_initial_condition(cfg.seed), &cfg)?;
    let norm = Normalizer::fit(&raw.slice(0..20_000))?;
    let data = norm.normalize(&raw);
    let (train, test) = (data.slice(0..20_000), data.slice(20_000..80_000));

    let params = ReservoirParams {
        size: 400,
        density: 0.15,
        spectral_radius: 0.2,
        input_scale: 0.02,
        bias: -0.5,
        leak_rate: 0.7,
        beta: 1e-9,
    };
    let model = TrainedModel::train(&params, &train, 200, 7)?;
    let stats = ClimateStats::from_series(&test)?;
    let lambda1 = 1.17;

    let sync = 0..200;
    let forecast = model.forecast_window(&test, sync.clone(), 600)?;
    let truth = test.slice(truth_range(&sync, 600));
    let rmse = normalized_rmse(&forecast, &truth, &stats)?;
    for t in (0..600).step_by(100) {
        println!("t = {:>3} steps: RMSE {:.3}", t, rmse[t]);
    }
    let one = valid_prediction_time(&rmse, 0.3, test.dt(), lambda1);
    println!("first IC: VPT {:.2} Lyapunov times", one.lyapunov_times);

    let vcfg = VptConfig {
        n_ics: 50,
        ..VptConfig::default()
    };
    let report = vpt_distribution(&model, &test, &stats, &vcfg, lambda1)?;
    println!(
        "{} ICs: mean VPT {:.2}, median {:.2}, {} censored",
        report.vpt_values.len(),
        report.mean,
        report.median,
        report.n_censored()
    );
    Ok(())
}

