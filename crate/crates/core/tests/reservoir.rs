use ergodic_rc::dynamics::{generate_trajectory, IntegrationConfig, Normalizer, SystemSpec, TimeSeries};
use ergodic_rc::reservoir::{
    build_reservoir, collect_states, drive, forecast, rc_jacobian, synchronize, train_readout,
    ReservoirParams,
};
use ergodic_rc::training::TrainedModel;
use ergodic_rc::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(size: usize) -> ReservoirParams {
    ReservoirParams {
        size,
        ..Default::default()
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn l96_normalized(n_steps: usize, seed: u64) -> TimeSeries {
    let sys = SystemSpec::lorenz96(10, 8.0).unwrap();
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps,
        n_transient: 2_000,
        seed,
    };
    let raw = generate_trajectory(&sys, &sys.random_initial_condition(seed), &cfg).unwrap();
    Normalizer::fit(&raw).unwrap().normalize(&raw)
}

#[test]
fn adjacency_has_requested_radius_and_density() {
    for seed in 0..3 {
        let res = build_reservoir(&params(200), 3, seed).unwrap();
        let dense = res.adjacency().to_dense();
        let radius = dense
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!((0.891..=0.909).contains(&radius), "radius {radius}");
        let nnz = res.adjacency().nnz() as f64;
        assert!((0.018 * 40_000.0..=0.022 * 40_000.0).contains(&nnz), "nnz {nnz}");
        assert_eq!(dense.iter().filter(|v| **v != 0.0).count(), res.adjacency().nnz());
    }
}

#[test]
fn same_seed_same_reservoir() {
    let a = build_reservoir(&params(100), 4, 77).unwrap();
    let b = build_reservoir(&params(100), 4, 77).unwrap();
    let c = build_reservoir(&params(100), 4, 78).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.adjacency(), c.adjacency());
}

proptest! {
    #[test]
    fn driven_state_is_bounded(seed in any::<u64>(), leak in 0.05f64..1.0, scale in 0.01f64..5.0) {
        let p = ReservoirParams { size: 40, density: 0.2, leak_rate: leak, input_scale: scale, ..Default::default() };
        let res = build_reservoir(&p, 3, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..50 {
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-100.0..100.0)).collect();
            r = drive(&res, &r, &u).unwrap();
            prop_assert!(r.iter().all(|v| v.abs() <= 1.0));
        }
    }
}

#[test]
fn contracting_reservoir_forgets_its_initial_state() {
    let p = ReservoirParams {
        size: 100,
        density: 0.05,
        spectral_radius: 0.5,
        ..Default::default()
    };
    let res = build_reservoir(&p, 10, 3).unwrap();
    let series = l96_normalized(1_000, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ra = synchronize(&res, &series, &a).unwrap();
    let rb = synchronize(&res, &series, &b).unwrap();
    let gap = ra.iter().zip(&rb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-6, "gap {gap}");
}

#[test]
fn synchronize_edge_cases() {
    let res = build_reservoir(&params(20), 2, 0).unwrap();
    let r0 = vec![0.1; 20];
    let empty = TimeSeries::empty(0.01, 2).unwrap();
    assert_eq!(synchronize(&res, &empty, &r0).unwrap(), r0);
    let one = TimeSeries::new(0.01, 2, vec![0.3, -0.2]).unwrap();
    assert_eq!(synchronize(&res, &one, &r0).unwrap(), drive(&res, &r0, &[0.3, -0.2]).unwrap());
}

#[test]
fn collected_states_follow_the_drive() {
    let res = build_reservoir(&params(30), 2, 5).unwrap();
    let series = TimeSeries::new(0.01, 2, (0..40).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap();
    let c = collect_states(&res, &series, 5).unwrap();
    assert_eq!(c.states.shape(), (30, 15));
    let mut r = vec![0.0; 30];
    for t in 0..20 {
        if t >= 5 {
            assert_eq!(c.states.column(t - 5).as_slice(), r.as_slice());
            assert_eq!(c.targets.column(t - 5).as_slice(), series.row(t));
        }
        r = drive(&res, &r, series.row(t)).unwrap();
    }
    assert_eq!(c.last_state, r);
}

/// Ridge solution through a dense LU solve of the normal equations.
fn brute_force_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let gram = x * x.transpose() + DMatrix::identity(n, n) * beta;
    let rhs = y * x.transpose();
    gram.transpose().lu().solve(&rhs.transpose()).unwrap().transpose()
}

#[test]
fn ridge_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_matrix(&mut rng, 20, 50);
    let y = random_matrix(&mut rng, 3, 50);
    for beta in [0.0, 1e-6, 1.0, 1e3] {
        let got = train_readout(&x, &y, beta).unwrap().weights;
        let want = brute_force_ridge(&x, &y, beta);
        let err = (&got - &want).amax() / want.amax();
        assert!(err < 1e-8, "beta {beta}: {err}");
    }
}

#[test]
fn ridge_is_a_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_matrix(&mut rng, 20, 50);
    let y = random_matrix(&mut rng, 3, 50);
    let beta = 0.1;
    let objective = |w: &DMatrix<f64>| (y.clone() - w * &x).norm_squared() + beta * w.norm_squared();
    let w = train_readout(&x, &y, beta).unwrap().weights;
    let best = objective(&w);
    for _ in 0..100 {
        let delta = random_matrix(&mut rng, 3, 20) * 1e-3;
        assert!(objective(&(&w + delta)) >= best);
    }
}

#[test]
fn unregularized_rank_deficient_states_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_matrix(&mut rng, 20, 10);
    let y = random_matrix(&mut rng, 2, 10);
    assert!(matches!(train_readout(&x, &y, 0.0), Err(Error::IllConditioned(_))));
    assert!(train_readout(&x, &y, 1e-6).is_ok());
}

#[test]
fn forecast_rows_are_readouts_of_successive_states() {
    let res = build_reservoir(&params(20), 2, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let readout = ergodic_rc::reservoir::ReadoutMatrix::new(random_matrix(&mut rng, 2, 20) * 0.1).unwrap();
    let r0: Vec<f64> = (0..20).map(|_| rng.random_range(-0.5..0.5)).collect();
    let f = forecast(&res, &readout, &r0, 3, 0.01).unwrap();
    let mut r = r0;
    for row in f.rows() {
        r = drive(&res, &r, &readout.apply(&r)).unwrap();
        assert_eq!(row, readout.apply(&r).as_slice());
    }
    assert_eq!(forecast(&res, &readout, &[0.0; 20], 0, 0.01).unwrap().len(), 0);
}

#[test]
fn jacobian_matches_finite_differences() {
    let p = ReservoirParams {
        size: 20,
        density: 0.3,
        leak_rate: 0.6,
        bias: 0.2,
        ..Default::default()
    };
    let res = build_reservoir(&p, 3, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let readout = ergodic_rc::reservoir::ReadoutMatrix::new(random_matrix(&mut rng, 3, 20)).unwrap();
    let step = |r: &[f64]| drive(&res, r, &readout.apply(r)).unwrap();
    let h = 1e-6;
    for _ in 0..20 {
        let r: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jac = rc_jacobian(&res, &readout, &r).unwrap();
        for j in 0..20 {
            let mut up = r.clone();
            let mut dn = r.clone();
            up[j] += h;
            dn[j] -= h;
            let (fp, fm) = (step(&up), step(&dn));
            for k in 0..20 {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                assert!((fd - jac[(k, j)]).abs() < 1e-5, "({k}, {j}): {fd} vs {}", jac[(k, j)]);
            }
        }
    }
}

#[test]
fn jacobian_at_zero_preactivation() {
    let p = ReservoirParams {
        size: 15,
        density: 0.3,
        leak_rate: 0.4,
        ..Default::default()
    };
    let res = build_reservoir(&p, 2, 6).unwrap();
    let readout = ergodic_rc::reservoir::ReadoutMatrix::new(DMatrix::zeros(2, 15)).unwrap();
    // With zero bias and zero readout, z = A·0 = 0 and tanh' = 1.
    let jac = rc_jacobian(&res, &readout, &[0.0; 15]).unwrap();
    let want = res.adjacency().to_dense() * 0.4 + DMatrix::identity(15, 15) * 0.6;
    assert!((jac - want).amax() < 1e-15);
}

#[test]
fn trained_model_free_run_stays_bounded() {
    let train = l96_normalized(20_000, 12);
    let p = ReservoirParams {
        size: 200,
        density: 0.1,
        spectral_radius: 0.3,
        input_scale: 0.03,
        bias: -0.5,
        leak_rate: 0.7,
        beta: 1e-8,
    };
    let model = TrainedModel::train(&p, &train, 200, 1).unwrap();
    let run = model.free_run(10_000).unwrap();
    assert_eq!(run.len(), 10_000);
    assert!(run.max_abs() < 10.0, "max |u| {}", run.max_abs());
}
