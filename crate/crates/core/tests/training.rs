use ergodic_rc::dynamics::{generate_trajectory, IntegrationConfig, Normalizer, SystemSpec, TimeSeries};
use ergodic_rc::reservoir::ReservoirParams;
use ergodic_rc::training::{
    cma_es_minimize, compute_loss, evaluate_candidate, invariant_mismatch, split_data,
    validation_windows, CmaEsConfig, InvariantTargets, LossConfig, Scale, SearchDimension,
    SearchSpace,
};
use proptest::prelude::*;

fn loss_cfg(e1: f64, e2: f64, t_f: usize, m: usize) -> LossConfig {
    LossConfig {
        epsilon1: e1,
        epsilon2: e2,
        t_i: 0,
        t_f,
        m,
        rc_le_steps: 2_000,
        rc_le_transient: 200,
    }
}

fn series(values: Vec<f64>, dim: usize) -> TimeSeries {
    TimeSeries::new(0.01, dim, values).unwrap()
}

#[test]
fn loss_matches_hand_computation() {
    let cfg = loss_cfg(2.0, 0.5, 2, 1);
    let targets = InvariantTargets {
        leading_les: Some(vec![2.0, 0.5]),
        fractal_dimension: Some(3.0),
    };
    let model = InvariantTargets {
        leading_les: Some(vec![1.0, 0.5, -1.0]),
        fractal_dimension: Some(2.5),
    };
    let f = series(vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0], 2);
    let u = series(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 2);
    // Exponents scaled by |λ1| = 2: ((2-1)/2)² = 0.25; dimension (0.5)² = 0.25.
    let invariant = 0.25 + 0.25;
    // Squared errors 1, 2, 0 at t = 0, 1, 2 with weights 1, e^-1/2, e^-1.
    let forecast = 1.0 + 2.0 * (-0.5f64).exp();
    let want = 2.0 * invariant + 0.5 * forecast;
    let got = compute_loss(&cfg, &targets, &model, &[f], &[u]).unwrap();
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
}

proptest! {
    #[test]
    fn loss_is_monotone_in_epsilon1(
        a in 0.0f64..10.0,
        b in 0.0f64..10.0,
        l1 in 0.1f64..3.0,
        m1 in -3.0f64..3.0,
        err in proptest::collection::vec(-2.0f64..2.0, 6),
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let targets = InvariantTargets { leading_les: Some(vec![l1]), fractal_dimension: None };
        let model = InvariantTargets { leading_les: Some(vec![m1]), fractal_dimension: None };
        let f = series(err, 2);
        let u = series(vec![0.0; 6], 2);
        let at = |e1: f64| compute_loss(&loss_cfg(e1, 1.0, 2, 1), &targets, &model, &[f.clone()], &[u.clone()]).unwrap();
        prop_assert!(at(lo) <= at(hi));
    }
}

struct Fixture {
    train: TimeSeries,
    windows_cfg: (usize, usize),
    val: TimeSeries,
}

fn fixture() -> Fixture {
    let sys = SystemSpec::lorenz96(10, 8.0).unwrap();
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps: 12_000,
        n_transient: 2_000,
        seed: 3,
    };
    let raw = generate_trajectory(&sys, &sys.random_initial_condition(3), &cfg).unwrap();
    let norm = Normalizer::fit(&raw).unwrap().normalize(&raw);
    let (train, val, _) = split_data(&norm, 0.5, 0.25).unwrap();
    Fixture {
        train,
        windows_cfg: (100, 100),
        val,
    }
}

fn small_params() -> ReservoirParams {
    ReservoirParams {
        size: 60,
        density: 0.1,
        spectral_radius: 0.4,
        input_scale: 0.1,
        bias: -0.3,
        leak_rate: 0.8,
        beta: 1e-6,
    }
}

#[test]
fn constraint_adds_exactly_the_weighted_mismatch() {
    let fx = fixture();
    let (sync, t_f) = fx.windows_cfg;
    let windows = validation_windows(&fx.val, 3, sync, t_f + 1).unwrap();
    let targets = InvariantTargets {
        leading_les: Some(vec![1.17]),
        fractal_dimension: None,
    };
    let free = evaluate_candidate(&small_params(), &fx.train, &windows, &targets, &loss_cfg(0.0, 1.0, t_f, 3), 100, 8)
        .unwrap();
    let e1 = 2.5;
    let tied = evaluate_candidate(&small_params(), &fx.train, &windows, &targets, &loss_cfg(e1, 1.0, t_f, 3), 100, 8)
        .unwrap();
    let model = tied.rc_invariants.clone().unwrap();
    let mismatch = invariant_mismatch(&targets, &model).unwrap();
    assert_eq!(free.terms.forecast, tied.terms.forecast);
    assert_eq!(tied.terms.invariant, e1 * mismatch);
    assert!((tied.loss - free.loss - e1 * mismatch).abs() <= 1e-12 * tied.loss);
    assert!(free.rc_invariants.is_none());

    let again = evaluate_candidate(&small_params(), &fx.train, &windows, &targets, &loss_cfg(e1, 1.0, t_f, 3), 100, 8)
        .unwrap();
    assert_eq!(again.loss, tied.loss);
}

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

fn cma(seed: u64, generations: usize, parallel: bool) -> CmaEsConfig {
    CmaEsConfig {
        max_generations: generations,
        seed,
        parallel,
        ..Default::default()
    }
}

#[test]
fn cma_solves_sphere() {
    let space = SearchSpace::uniform_box(10, -5.0, 5.0).unwrap();
    let lambda = cma(0, 1, false).population_for(10);
    let r = cma_es_minimize(sphere, &space, &cma(1, 20_000 / lambda, false), None).unwrap();
    assert!(r.evaluations() <= 20_000);
    assert!(r.best_loss < 1e-8, "best {}", r.best_loss);
}

#[test]
fn cma_solves_rosenbrock() {
    let space = SearchSpace::uniform_box(5, -5.0, 5.0).unwrap();
    let lambda = cma(0, 1, false).population_for(5);
    let r = cma_es_minimize(rosenbrock, &space, &cma(2, 50_000 / lambda, false), None).unwrap();
    assert!(r.evaluations() <= 50_000);
    assert!(r.best_loss < 1e-6, "best {}", r.best_loss);
}

#[test]
fn cma_stays_inside_mixed_scale_bounds() {
    let space = SearchSpace::new(vec![
        SearchDimension::new("a", 0.1, 0.2, Scale::Linear),
        SearchDimension::new("b", 1e-8, 1e-2, Scale::Log10),
    ])
    .unwrap();
    // The unconstrained minimum lies outside the box.
    let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1].log10() + 12.0).powi(2);
    let r = cma_es_minimize(f, &space, &cma(3, 40, true), None).unwrap();
    assert!(r.history.iter().all(|e| space.contains(&e.point)));
    assert!((r.best_point[0] - 0.2).abs() < 1e-6);
    assert!((r.best_point[1].log10() + 8.0).abs() < 1e-3);
}

#[test]
fn cma_depends_only_on_ranks() {
    let space = SearchSpace::uniform_box(4, -5.0, 5.0).unwrap();
    let a = cma_es_minimize(rosenbrock, &space, &cma(4, 30, false), None).unwrap();
    let b = cma_es_minimize(|x: &[f64]| 10.0 * rosenbrock(x), &space, &cma(4, 30, false), None).unwrap();
    assert_eq!(a.best_per_generation, b.best_per_generation);
}

#[test]
fn cma_parallel_equals_serial() {
    let space = SearchSpace::uniform_box(6, -5.0, 5.0).unwrap();
    let a = cma_es_minimize(rosenbrock, &space, &cma(5, 25, false), None).unwrap();
    let b = cma_es_minimize(rosenbrock, &space, &cma(5, 25, true), None).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.best_point, b.best_point);
}

#[test]
fn cma_stops_at_target() {
    let space = SearchSpace::uniform_box(3, -5.0, 5.0).unwrap();
    let cfg = CmaEsConfig {
        target_loss: Some(1e-2),
        ..cma(6, 500, false)
    };
    let r = cma_es_minimize(sphere, &space, &cfg, None).unwrap();
    assert!(r.best_loss <= 1e-2);
    assert!(r.generations < 500);
}
