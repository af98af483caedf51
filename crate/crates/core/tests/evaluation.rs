use std::ops::Range;

use ergodic_rc::dynamics::{generate_trajectory, IntegrationConfig, SystemSpec, TimeSeries};
use ergodic_rc::evaluation::{
    compare_invariants, normalized_rmse, valid_prediction_time, vpt_distribution, ClimateStats,
    Forecaster, TruthReplay, VptConfig,
};
use ergodic_rc::invariants::LyapunovSpectrum;
use ergodic_rc::{Error, Result};
use proptest::prelude::*;

proptest! {
    #[test]
    fn vpt_grows_with_threshold(
        rmse in proptest::collection::vec(0.0f64..2.0, 1..200),
        a in 0.0f64..2.0,
        b in 0.0f64..2.0,
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let v_lo = valid_prediction_time(&rmse, lo, 0.01, 1.2).lyapunov_times;
        let v_hi = valid_prediction_time(&rmse, hi, 0.01, 1.2).lyapunov_times;
        prop_assert!(v_lo <= v_hi);
    }

    #[test]
    fn rmse_ignores_affine_rescaling(
        f in proptest::collection::vec(-5.0f64..5.0, 12),
        u in proptest::collection::vec(-5.0f64..5.0, 12),
        scale in proptest::collection::vec(0.1f64..10.0, 3),
        shift in proptest::collection::vec(-10.0f64..10.0, 3),
    ) {
        let sigma = vec![1.0, 2.0, 0.5];
        let stats = ClimateStats::new(vec![0.0; 3], sigma.clone()).unwrap();
        let base = normalized_rmse(
            &TimeSeries::new(0.01, 3, f.clone()).unwrap(),
            &TimeSeries::new(0.01, 3, u.clone()).unwrap(),
            &stats,
        ).unwrap();
        let map = |x: &[f64]| -> Vec<f64> {
            x.iter().enumerate().map(|(i, v)| scale[i % 3] * v + shift[i % 3]).collect()
        };
        let scaled_stats = ClimateStats::new(
            shift.clone(),
            sigma.iter().zip(&scale).map(|(s, a)| s * a).collect(),
        ).unwrap();
        let moved = normalized_rmse(
            &TimeSeries::new(0.01, 3, map(&f)).unwrap(),
            &TimeSeries::new(0.01, 3, map(&u)).unwrap(),
            &scaled_stats,
        ).unwrap();
        for (x, y) in base.iter().zip(&moved) {
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
        }
    }
}

#[test]
fn vpt_hand_values() {
    let rmse = [0.0, 0.1, 0.2, 0.31, 0.1];
    let v = valid_prediction_time(&rmse, 0.3, 0.01, 2.0);
    assert!((v.lyapunov_times - 3.0 * 0.01 * 2.0).abs() < 1e-15);
    assert!(!v.censored);
    let v = valid_prediction_time(&rmse, 0.5, 0.01, 2.0);
    assert!(v.censored);
    assert!((v.lyapunov_times - 5.0 * 0.01 * 2.0).abs() < 1e-15);
}

fn l96_series(n: usize) -> TimeSeries {
    let sys = SystemSpec::lorenz96(10, 8.0).unwrap();
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps: n,
        n_transient: 2_000,
        seed: 4,
    };
    generate_trajectory(&sys, &sys.random_initial_condition(4), &cfg).unwrap()
}

/// Repeats the last synchronization row.
struct Persistence;

impl Forecaster for Persistence {
    fn forecast_window(&self, series: &TimeSeries, sync: Range<usize>, n_steps: usize) -> Result<TimeSeries> {
        let last = series.row(sync.end - 1).to_vec();
        TimeSeries::new(series.dt(), series.dim(), last.repeat(n_steps))
    }
}

/// Fails with a divergence at a fixed step.
struct BlowsUp(usize);

impl Forecaster for BlowsUp {
    fn forecast_window(&self, _: &TimeSeries, _: Range<usize>, _: usize) -> Result<TimeSeries> {
        Err(Error::Divergence {
            step: self.0,
            magnitude: f64::INFINITY,
        })
    }
}

#[test]
fn perfect_and_persistence_forecasts() {
    let series = l96_series(12_000);
    let stats = ClimateStats::from_series(&series).unwrap();
    let cfg = VptConfig {
        n_ics: 10,
        sync_len: 100,
        horizon: 500,
        epsilon: 0.3,
    };
    let perfect = vpt_distribution(&TruthReplay, &series, &stats, &cfg, 1.2).unwrap();
    assert_eq!(perfect.n_censored(), 10);
    assert!((perfect.mean - 500.0 * 0.01 * 1.2).abs() < 1e-12);

    let report = vpt_distribution(&Persistence, &series, &stats, &cfg, 1.2).unwrap();
    for (ic, v) in report.vpt_values.iter().enumerate() {
        let start = ic * cfg.window();
        let last = series.row(start + cfg.sync_len - 1);
        let t_star = (0..cfg.horizon)
            .position(|j| {
                let u = series.row(start + cfg.sync_len + 1 + j);
                let s: f64 = (0..10).map(|k| ((last[k] - u[k]) / stats.sigma[k]).powi(2)).sum();
                (s / 10.0).sqrt() > 0.3
            })
            .unwrap();
        assert!((v - t_star as f64 * 0.012).abs() < 1e-12, "ic {ic}: {v} vs {t_star}");
    }
    assert!(report.mean < perfect.mean);
}

#[test]
fn divergence_scores_completed_steps() {
    let series = l96_series(2_000);
    let stats = ClimateStats::from_series(&series).unwrap();
    let cfg = VptConfig {
        n_ics: 2,
        sync_len: 100,
        horizon: 500,
        epsilon: 0.3,
    };
    let r = vpt_distribution(&BlowsUp(7), &series, &stats, &cfg, 1.0).unwrap();
    assert!(r.vpt_values.iter().all(|&v| (v - 0.06).abs() < 1e-12));
    assert_eq!(r.n_censored(), 0);
}

#[test]
fn spectrum_comparison() {
    let truth = LyapunovSpectrum::new(vec![1.0, 0.0, -2.0], 100, 0.01).unwrap();
    let model = LyapunovSpectrum::new(vec![1.2, 0.0, -2.4], 100, 0.01).unwrap();
    let c = compare_invariants(&model, &truth).unwrap();
    assert!((c.lambda1_relative_error - 0.2).abs() < 1e-12);
    // 2 + 1/2 against 2 + 1.2/2.4.
    assert!((c.ky_truth - 2.5).abs() < 1e-12);
    assert!(c.ky_abs_error < 1e-12);
    assert_eq!(c.exponent_errors.len(), 3);
}
