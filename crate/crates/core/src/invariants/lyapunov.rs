//! Lyapunov spectra by repeated QR re-orthonormalization of tangent vectors.
//!
//! Flows are handled by co-integrating the tangent-linear equations with the
//! base trajectory under RK4; discrete maps propagate the tangent basis with
//! the map's Jacobian directly. Both accumulate `ln |R_ii|` between QR steps.

use nalgebra::{DMatrix, DMatrixView};

use crate::dynamics::{check_bounded, Rk4, VectorField};
use crate::error::{Error, Result};

/// Descending Lyapunov exponents in inverse model-time units.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpectrum {
    exponents: Vec<f64>,
    pub n_steps_used: usize,
    pub dt: f64,
}

impl LyapunovSpectrum {
    /// Builds a spectrum, sorting the exponents into descending order.
    pub fn new(mut exponents: Vec<f64>, n_steps_used: usize, dt: f64) -> Result<Self> {
        if exponents.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("Lyapunov exponents must be finite"));
        }
        exponents.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            exponents,
            n_steps_used,
            dt,
        })
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn largest(&self) -> Option<f64> {
        self.exponents.first().copied()
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    /// The `k` leading exponents.
    pub fn leading(&self, k: usize) -> &[f64] {
        &self.exponents[..k.min(self.exponents.len())]
    }

    pub fn kaplan_yorke(&self) -> Result<f64> {
        super::kaplan_yorke_dimension(&self.exponents)
    }

    /// Counts exponents that are positive, zero and negative within `tol`.
    pub fn sign_counts(&self, tol: f64) -> (usize, usize, usize) {
        let pos = self.exponents.iter().filter(|&&l| l > tol).count();
        let neg = self.exponents.iter().filter(|&&l| l < -tol).count();
        (pos, self.exponents.len() - pos - neg, neg)
    }
}

/// Run lengths for a Lyapunov computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeConfig {
    pub dt: f64,
    /// Steps over which `ln |R_ii|` is accumulated.
    pub n_steps: usize,
    /// Steps run first to align the tangent basis; their growth is discarded.
    pub n_transient: usize,
    /// Steps between QR re-orthonormalizations.
    pub qr_interval: usize,
    pub n_exponents: usize,
}

impl LeConfig {
    /// Defaults: a transient of 10% of `n_steps` and QR every 10 steps.
    pub fn new(dt: f64, n_steps: usize, n_exponents: usize) -> Self {
        Self {
            dt,
            n_steps,
            n_transient: n_steps / 10,
            qr_interval: 10,
            n_exponents,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be positive"));
        }
        if self.qr_interval == 0 {
            return Err(Error::invalid("qr_interval must be positive"));
        }
        if self.n_exponents == 0 || self.n_exponents > dim {
            return Err(Error::invalid(format!(
                "n_exponents must be in 1..={dim}, got {}",
                self.n_exponents
            )));
        }
        Ok(())
    }
}

/// Threshold below which a QR diagonal entry means the tangent basis collapsed.
const MIN_R_DIAGONAL: f64 = 1e-300;

/// Re-orthonormalizes `q` in place and adds `ln |R_ii|` to `sums` when given.
fn reorthonormalize(q: &mut DMatrix<f64>, sums: Option<&mut [f64]>) -> Result<()> {
    let k = q.ncols();
    let qr = q.clone().qr();
    let r = qr.r();
    let mut basis = qr.q();
    let mut logs = vec![0.0; k];
    for i in 0..k {
        let rii = r[(i, i)];
        if !rii.is_finite() || rii.abs() <= MIN_R_DIAGONAL {
            return Err(Error::IllConditioned(format!(
                "tangent vector {i} collapsed (R_ii = {rii:e})"
            )));
        }
        if rii < 0.0 {
            basis.column_mut(i).neg_mut();
        }
        logs[i] = rii.abs().ln();
    }
    *q = basis;
    if let Some(sums) = sums {
        for (s, l) in sums.iter_mut().zip(logs) {
            *s += l;
        }
    }
    Ok(())
}

fn initial_basis(dim: usize, k: usize) -> DMatrix<f64> {
    DMatrix::identity(dim, k)
}

/// Lyapunov spectrum of the flow of `system`, Benettin-style.
pub fn lyapunov_spectrum_ode<S: VectorField>(
    system: &S,
    u0: &[f64],
    cfg: &LeConfig,
) -> Result<LyapunovSpectrum> {
    let dim = system.dim();
    if u0.len() != dim {
        return Err(Error::invalid(format!(
            "initial condition has length {}, system dimension is {dim}",
            u0.len()
        )));
    }
    cfg.validate(dim)?;
    let k = cfg.n_exponents;

    // Augmented state: base point followed by the column-major tangent basis.
    let mut aug = vec![0.0; dim + dim * k];
    aug[..dim].copy_from_slice(u0);
    let mut q = initial_basis(dim, k);
    aug[dim..].copy_from_slice(q.as_slice());

    let rhs = |x: &[f64], out: &mut [f64]| {
        let (u, tangent) = x.split_at(dim);
        let (du, dtangent) = out.split_at_mut(dim);
        system.eval(u, du);
        let jac = system.jacobian(u);
        let basis = DMatrixView::from_slice(tangent, dim, k);
        let prod = jac * basis;
        dtangent.copy_from_slice(prod.as_slice());
    };

    let mut rk4 = Rk4::new(aug.len());
    let mut sums = vec![0.0; k];
    let total = cfg.n_transient + cfg.n_steps;
    for step in 1..=total {
        rk4.step(rhs, &mut aug, cfg.dt);
        check_bounded(&aug[..dim], step)?;
        let at_boundary = step % cfg.qr_interval == 0 || step == cfg.n_transient || step == total;
        if at_boundary {
            q.as_mut_slice().copy_from_slice(&aug[dim..]);
            let accumulate = step > cfg.n_transient;
            reorthonormalize(&mut q, accumulate.then_some(sums.as_mut_slice()))?;
            aug[dim..].copy_from_slice(q.as_slice());
        }
    }

    let time = cfg.n_steps as f64 * cfg.dt;
    let exponents = sums.into_iter().map(|s| s / time).collect();
    LyapunovSpectrum::new(exponents, cfg.n_steps, cfg.dt)
}

/// A discrete map together with the action of its Jacobian on tangent vectors.
pub trait TangentMap {
    fn dim(&self) -> usize;

    /// Writes the image of `state` into `next`.
    fn step(&self, state: &[f64], next: &mut [f64]);

    /// Returns `J(state) · vectors`, where `vectors` is `dim × k`.
    fn tangent(&self, state: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64>;
}

/// Adapts a pair of closures (map, dense Jacobian) to [`TangentMap`].
pub struct MatrixMap<S, J> {
    dim: usize,
    step: S,
    jacobian_at: J,
}

impl<S, J> MatrixMap<S, J>
where
    S: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    pub fn new(dim: usize, step: S, jacobian_at: J) -> Self {
        Self {
            dim,
            step,
            jacobian_at,
        }
    }
}

impl<S, J> TangentMap for MatrixMap<S, J>
where
    S: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn step(&self, state: &[f64], next: &mut [f64]) {
        next.copy_from_slice(&(self.step)(state));
    }

    fn tangent(&self, state: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
        (self.jacobian_at)(state) * vectors
    }
}

/// Lyapunov spectrum of a discrete map sampled every `cfg.dt` time units.
/// Per-step exponents are divided by `dt` so results are per unit time.
pub fn lyapunov_spectrum_map<M: TangentMap>(
    map: &M,
    r0: &[f64],
    cfg: &LeConfig,
) -> Result<LyapunovSpectrum> {
    let dim = map.dim();
    if r0.len() != dim {
        return Err(Error::invalid(format!(
            "initial state has length {}, map dimension is {dim}",
            r0.len()
        )));
    }
    cfg.validate(dim)?;
    let k = cfg.n_exponents;

    let mut state = r0.to_vec();
    let mut next = vec![0.0; dim];
    let mut q = initial_basis(dim, k);
    let mut sums = vec![0.0; k];
    let total = cfg.n_transient + cfg.n_steps;
    for step in 1..=total {
        q = map.tangent(&state, &q);
        map.step(&state, &mut next);
        std::mem::swap(&mut state, &mut next);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step,
                magnitude: f64::INFINITY,
            });
        }
        let at_boundary = step % cfg.qr_interval == 0 || step == cfg.n_transient || step == total;
        if at_boundary {
            let accumulate = step > cfg.n_transient;
            reorthonormalize(&mut q, accumulate.then_some(sums.as_mut_slice()))?;
        }
    }

    let time = cfg.n_steps as f64 * cfg.dt;
    let exponents = sums.into_iter().map(|s| s / time).collect();
    LyapunovSpectrum::new(exponents, cfg.n_steps, cfg.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearSystem;

    #[test]
    fn linear_flow_recovers_diagonal_rates() {
        let rates = [0.7, -0.2, -1.5, 0.1];
        let system = LinearSystem {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&rates)),
        };
        let cfg = LeConfig::new(0.01, 2_000, 4);
        let spec = lyapunov_spectrum_ode(&system, &[0.0; 4], &cfg).unwrap();
        let mut expected = rates.to_vec();
        expected.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in spec.exponents().iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn scalar_contraction_map() {
        let map = MatrixMap::new(1, |r: &[f64]| vec![0.5 * r[0]], |_| DMatrix::from_element(1, 1, 0.5));
        let cfg = LeConfig::new(1.0, 200, 1);
        let spec = lyapunov_spectrum_map(&map, &[1.0], &cfg).unwrap();
        assert!((spec.exponents()[0] - 0.5_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn diagonal_map_two_exponents() {
        let jac = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[2.0, 0.5]));
        let j2 = jac.clone();
        let map = MatrixMap::new(
            2,
            move |r: &[f64]| (&j2 * nalgebra::DVector::from_row_slice(r)).as_slice().to_vec(),
            move |_| jac.clone(),
        );
        let cfg = LeConfig::new(1.0, 100, 2);
        let spec = lyapunov_spectrum_map(&map, &[0.0, 0.0], &cfg).unwrap();
        assert!((spec.exponents()[0] - 2.0_f64.ln()).abs() < 1e-9);
        assert!((spec.exponents()[1] - 0.5_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn config_is_validated() {
        let system = LinearSystem {
            matrix: DMatrix::identity(2, 2),
        };
        let mut cfg = LeConfig::new(0.01, 100, 3);
        assert!(lyapunov_spectrum_ode(&system, &[0.0; 2], &cfg).is_err());
        cfg.n_exponents = 2;
        cfg.qr_interval = 0;
        assert!(lyapunov_spectrum_ode(&system, &[0.0; 2], &cfg).is_err());
    }

    #[test]
    fn collapsed_basis_is_a_conditioning_error() {
        let map = MatrixMap::new(2, |r: &[f64]| r.to_vec(), |_| DMatrix::zeros(2, 2));
        let cfg = LeConfig::new(1.0, 10, 2);
        assert!(matches!(
            lyapunov_spectrum_map(&map, &[1.0, 1.0], &cfg),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn sign_counts_use_tolerance() {
        let spec = LyapunovSpectrum::new(vec![0.5, 0.01, -0.01, -3.0], 1, 0.01).unwrap();
        assert_eq!(spec.sign_counts(0.02), (1, 2, 1));
    }
}
