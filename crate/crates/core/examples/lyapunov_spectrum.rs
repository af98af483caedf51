//! Lyapunov spectra and Kaplan-Yorke dimensions of Lorenz 63 and Lorenz 96.

use std::time::Instant;

use ergodic_rc::dynamics::SystemSpec;
use ergodic_rc::invariants::{lyapunov_spectrum_ode, LeConfig, ZERO_EXPONENT_TOL};

fn main() -> ergodic_rc::Result<()> {
    let l63 = SystemSpec::lorenz63_standard();
    let s = lyapunov_spectrum_ode(&l63, &l63.random_initial_condition(0), &LeConfig::new(0.01, 200_000, 3))?;
    println!("Lorenz 63: {:.4?}, KY = {:.4}", s.exponents(), s.kaplan_yorke()?);

    let l96 = SystemSpec::lorenz96(10, 8.0)?;
    let start = Instant::now();
    let s = lyapunov_spectrum_ode(&l96, &l96.random_initial_condition(0), &LeConfig::new(0.01, 100_000, 10))?;
    let (pos, zero, neg) = s.sign_counts(ZERO_EXPONENT_TOL);
    println!("Lorenz 96 (D=10, F=8) in {:.2?}:", start.elapsed());
    for (i, l) in s.exponents().iter().enumerate() {
        println!("  lambda_{:<2} = {l:+.4}", i + 1);
    }
    println!("  {pos} positive, {zero} zero, {neg} negative; sum = {:.4}", s.sum());
    println!("  Kaplan-Yorke dimension = {:.4}", s.kaplan_yorke()?);
    Ok(())
}
