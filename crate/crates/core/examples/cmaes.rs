//! CMA-ES on standard test functions, including a log-scaled coordinate.

use ergodic_rc::training::{cma_es_minimize, CmaEsConfig, Scale, SearchDimension, SearchSpace};

fn main() -> ergodic_rc::Result<()> {
    let cfg = CmaEsConfig {
        max_generations: 5_000,
        target_loss: Some(1e-10),
        seed: 1,
        ..CmaEsConfig::default()
    };

    let sphere = SearchSpace::uniform_box(10, -5.0, 5.0)?;
    let r = cma_es_minimize(|x| x.iter().map(|v| v * v).sum(), &sphere, &cfg, None)?;
    println!("sphere 10-D: {:.3e} after {} evaluations", r.best_loss, r.evaluations());

    let rosen = SearchSpace::uniform_box(2, -2.0, 2.0)?;
    let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
    let r = cma_es_minimize(f, &rosen, &cfg, None)?;
    println!(
        "Rosenbrock: {:.3e} at ({:.6}, {:.6}) after {} evaluations",
        r.best_loss,
        r.best_point[0],
        r.best_point[1],
        r.evaluations()
    );

    // The optimum sits at 1e-4 on a log axis spanning eight decades.
    let space = SearchSpace::new(vec![
        SearchDimension::new("beta", 1e-10, 1e-2, Scale::Log10),
        SearchDimension::new("x", -1.0, 1.0, Scale::Linear),
    ])?;
    let r = cma_es_minimize(|p| (p[0].log10() + 4.0).powi(2) + p[1] * p[1], &space, &cfg, None)?;
    println!("log-scaled: beta = {:.3e}, x = {:.2e}", r.best_point[0], r.best_point[1]);
    Ok(())
}
