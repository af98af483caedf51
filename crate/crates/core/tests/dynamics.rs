use ergodic_rc::dynamics::{
    generate_trajectory, l96_jacobian, l96_rhs, rk4_step, IntegrationConfig, SystemSpec,
    VectorField,
};
use ergodic_rc::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let f = 8.0;
    let h = 1e-5;
    for _ in 0..100 {
        let u = random_state(&mut rng, 10);
        let jac = l96_jacobian(&u, f).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..10 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            let fp = l96_rhs(&up, f).unwrap();
            let fm = l96_rhs(&dn, f).unwrap();
            for k in 0..10 {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                worst = worst.max((fd - jac[(k, j)]).abs());
            }
        }
        let scale = jac.amax().max(1.0);
        assert!(worst / scale < 1e-6, "relative error {}", worst / scale);
    }
}

proptest! {
    #[test]
    fn trace_is_minus_dimension(d in 4usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_state(&mut rng, d);
        let jac = l96_jacobian(&u, 8.0).unwrap();
        prop_assert_eq!(jac.trace(), -(d as f64));
    }

    #[test]
    fn fixed_point_survives_integration(d in 4usize..16, f in -10.0f64..10.0) {
        let system = SystemSpec::lorenz96(d, f).unwrap();
        let cfg = IntegrationConfig { dt: 0.01, n_steps: 200, n_transient: 50, seed: 0 };
        let series = generate_trajectory(&system, &vec![f; d], &cfg).unwrap();
        prop_assert!(series.rows().all(|r| r.iter().all(|&v| v == f)));
    }
}

#[test]
fn rk4_reproduces_exponential() {
    let u = rk4_step(|s: &[f64], out: &mut [f64]| out[0] = s[0], &[1.0], 0.1).unwrap();
    assert!((u[0] - 0.1f64.exp()).abs() < 1e-7);
}

#[test]
fn long_run_stays_on_attractor() {
    let system = SystemSpec::lorenz96(10, 8.0).unwrap();
    let cfg = IntegrationConfig {
        dt: 0.01,
        n_steps: 100_000,
        n_transient: 2_000,
        seed: 9,
    };
    let series = generate_trajectory(&system, &system.random_initial_condition(cfg.seed), &cfg).unwrap();
    assert_eq!(series.len(), 100_000);
    assert!(series.max_abs() < 20.0, "max |u| = {}", series.max_abs());
}

#[test]
fn transient_is_not_recorded() {
    let system = SystemSpec::lorenz96(10, 8.0).unwrap();
    let u0 = system.random_initial_condition(3);
    let full = generate_trajectory(
        &system,
        &u0,
        &IntegrationConfig { dt: 0.01, n_steps: 150, n_transient: 0, seed: 0 },
    )
    .unwrap();
    let tail = generate_trajectory(
        &system,
        &u0,
        &IntegrationConfig { dt: 0.01, n_steps: 100, n_transient: 50, seed: 0 },
    )
    .unwrap();
    assert_eq!(tail, full.slice(50..150));
}

#[test]
fn integration_is_bit_deterministic() {
    let system = SystemSpec::lorenz96(10, 8.0).unwrap();
    let cfg = IntegrationConfig::default();
    let u0 = system.random_initial_condition(17);
    let a = generate_trajectory(&system, &u0, &cfg).unwrap();
    let b = generate_trajectory(&system, &u0, &cfg).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
}

#[test]
fn lorenz63_vector_field() {
    let s = SystemSpec::lorenz63_standard();
    let mut out = [0.0; 3];
    s.eval(&[1.0, 2.0, 3.0], &mut out);
    assert_eq!(out[0], 10.0 * (2.0 - 1.0));
    assert_eq!(out[1], 1.0 * (28.0 - 3.0) - 2.0);
    assert!((out[2] - (1.0 * 2.0 - 8.0 / 3.0 * 3.0)).abs() < 1e-15);
}

#[test]
fn blow_up_reports_divergence() {
    // A linear field with growth rate 100 leaves the 1e6 box quickly.
    struct Grow;
    impl VectorField for Grow {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, s: &[f64], out: &mut [f64]) {
            out[0] = 100.0 * s[0];
        }
        fn jacobian(&self, _: &[f64]) -> nalgebra::DMatrix<f64> {
            nalgebra::DMatrix::from_element(1, 1, 100.0)
        }
    }
    let cfg = IntegrationConfig { dt: 0.01, n_steps: 1000, n_transient: 0, seed: 0 };
    match generate_trajectory(&Grow, &[1.0], &cfg) {
        Err(Error::Divergence { step, magnitude }) => {
            assert!(step > 0 && step < 1000);
            assert!(magnitude > 1e6);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}
