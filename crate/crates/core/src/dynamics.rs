//! Ground-truth chaotic systems and the fixed-step RK4 integrator.
//!
//! Lorenz 96 is the benchmark system; Lorenz 63 is carried along as a small
//! oracle with well-known exponents. Trajectories are stored as row-major
//! [`TimeSeries`], the common currency between every other module.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude beyond which an integration is treated as numerical blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// A smooth autonomous vector field `du/dt = f(u)` with a known Jacobian.
pub trait VectorField {
    fn dim(&self) -> usize;

    /// Writes `f(state)` into `out`.
    fn eval(&self, state: &[f64], out: &mut [f64]);

    /// Dense Jacobian `∂f_k/∂u_j` at `state`.
    fn jacobian(&self, state: &[f64]) -> DMatrix<f64>;
}

/// The ODE systems this crate can integrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Lorenz96 { dimension: usize, forcing: f64 },
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
}

impl SystemSpec {
    pub fn lorenz96(dimension: usize, forcing: f64) -> Result<Self> {
        let spec = SystemSpec::Lorenz96 { dimension, forcing };
        spec.validate()?;
        Ok(spec)
    }

    /// Lorenz 63 with the classic parameters (10, 28, 8/3).
    pub fn lorenz63_standard() -> Self {
        SystemSpec::Lorenz63 {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SystemSpec::Lorenz96 { dimension, forcing } => {
                if dimension < 4 {
                    return Err(Error::invalid(format!(
                        "Lorenz 96 needs dimension >= 4 for cyclic indexing, got {dimension}"
                    )));
                }
                if !forcing.is_finite() {
                    return Err(Error::invalid("Lorenz 96 forcing must be finite"));
                }
            }
            SystemSpec::Lorenz63 { sigma, rho, beta } => {
                if ![sigma, rho, beta].iter().all(|p| p.is_finite()) {
                    return Err(Error::invalid("Lorenz 63 parameters must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Random initial condition near the attractor: uniform on `[F-1, F+1]`
    /// per site for Lorenz 96, a box around the butterfly for Lorenz 63.
    pub fn random_initial_condition(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            SystemSpec::Lorenz96 { dimension, forcing } => (0..dimension)
                .map(|_| rng.random_range(forcing - 1.0..=forcing + 1.0))
                .collect(),
            SystemSpec::Lorenz63 { .. } => vec![
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(24.0..=26.0),
            ],
        }
    }
}

impl VectorField for SystemSpec {
    fn dim(&self) -> usize {
        match *self {
            SystemSpec::Lorenz96 { dimension, .. } => dimension,
            SystemSpec::Lorenz63 { .. } => 3,
        }
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        match *self {
            SystemSpec::Lorenz96 { forcing, .. } => l96_rhs_into(state, forcing, out),
            SystemSpec::Lorenz63 { sigma, rho, beta } => {
                let (x, y, z) = (state[0], state[1], state[2]);
                out[0] = sigma * (y - x);
                out[1] = x * (rho - z) - y;
                out[2] = x * y - beta * z;
            }
        }
    }

    fn jacobian(&self, state: &[f64]) -> DMatrix<f64> {
        match *self {
            SystemSpec::Lorenz96 { .. } => l96_jacobian_unchecked(state),
            SystemSpec::Lorenz63 { sigma, rho, beta } => {
                let (x, y, z) = (state[0], state[1], state[2]);
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[-sigma, sigma, 0.0, rho - z, -1.0, -x, y, x, -beta],
                )
            }
        }
    }
}

/// Linear flow `du/dt = M u`, mostly useful as an analytic test system.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
}

impl VectorField for LinearSystem {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.matrix.row(k).iter().zip(state).map(|(a, u)| a * u).sum();
        }
    }

    fn jacobian(&self, _state: &[f64]) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// Lorenz 96 tendency `du_k/dt = -u_{k-1}(u_{k-2} - u_{k+1}) - u_k + F`
/// with cyclic indices.
pub fn l96_rhs(state: &[f64], forcing: f64) -> Result<Vec<f64>> {
    check_l96_dim(state.len())?;
    let mut out = vec![0.0; state.len()];
    l96_rhs_into(state, forcing, &mut out);
    Ok(out)
}

fn l96_rhs_into(u: &[f64], forcing: f64, out: &mut [f64]) {
    let d = u.len();
    for k in 0..d {
        let km2 = (k + d - 2) % d;
        let km1 = (k + d - 1) % d;
        let kp1 = (k + 1) % d;
        out[k] = -u[km1] * (u[km2] - u[kp1]) - u[k] + forcing;
    }
}

/// Tangent-linear operator of [`l96_rhs`]. The forcing does not enter the
/// derivative but is accepted to mirror the tendency's signature.
pub fn l96_jacobian(state: &[f64], _forcing: f64) -> Result<DMatrix<f64>> {
    check_l96_dim(state.len())?;
    Ok(l96_jacobian_unchecked(state))
}

fn l96_jacobian_unchecked(u: &[f64]) -> DMatrix<f64> {
    let d = u.len();
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let km2 = (k + d - 2) % d;
        let km1 = (k + d - 1) % d;
        let kp1 = (k + 1) % d;
        jac[(k, km2)] = -u[km1];
        jac[(k, km1)] = u[kp1] - u[km2];
        jac[(k, k)] = -1.0;
        jac[(k, kp1)] = u[km1];
    }
    jac
}

fn check_l96_dim(d: usize) -> Result<()> {
    if d < 4 {
        return Err(Error::invalid(format!(
            "Lorenz 96 state needs at least 4 sites, got {d}"
        )));
    }
    Ok(())
}

/// Scratch space for repeated classical RK4 steps without reallocating.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `state` in place by one step of size `dt`.
    pub fn step<F>(&mut self, rhs: F, state: &mut [f64], dt: f64)
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let half = 0.5 * dt;
        rhs(state, &mut self.k1);
        for ((t, s), k) in self.tmp.iter_mut().zip(state.iter()).zip(&self.k1) {
            *t = s + half * k;
        }
        rhs(&self.tmp, &mut self.k2);
        for ((t, s), k) in self.tmp.iter_mut().zip(state.iter()).zip(&self.k2) {
            *t = s + half * k;
        }
        rhs(&self.tmp, &mut self.k3);
        for ((t, s), k) in self.tmp.iter_mut().zip(state.iter()).zip(&self.k3) {
            *t = s + dt * k;
        }
        rhs(&self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for (i, s) in state.iter_mut().enumerate() {
            *s += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(rhs: F, state: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let mut next = state.to_vec();
    Rk4::new(state.len()).step(rhs, &mut next, dt);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(next)
}

/// Uniformly sampled multivariate trajectory, stored row-major: row `t` is
/// the state at time `t * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if dim == 0 {
            return Err(Error::invalid("time series dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: pos / dim });
        }
        Ok(Self { dt, dim, data })
    }

    pub fn empty(dt: f64, dim: usize) -> Result<Self> {
        Self::new(dt, dim, Vec::new())
    }

    pub fn from_rows(dt: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have inconsistent lengths"));
        }
        Self::new(dt, dim, rows.concat())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies rows `range` into a new series with the same `dt`.
    pub fn slice(&self, range: Range<usize>) -> TimeSeries {
        assert!(range.end <= self.len(), "slice {range:?} out of bounds");
        TimeSeries {
            dt: self.dt,
            dim: self.dim,
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
        }
    }

    /// Values of component `k` over time.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Appends the rows of `others` in order.
    pub fn concat(parts: &[TimeSeries]) -> Result<TimeSeries> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        if parts.iter().any(|p| p.dim != first.dim || p.dt != first.dt) {
            return Err(Error::invalid("series differ in dimension or dt"));
        }
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(TimeSeries {
            dt: first.dt,
            dim: first.dim,
            data,
        })
    }

    /// Applies `f` to every row, producing a series of the same shape.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> TimeSeries {
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.rows().zip(data.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        TimeSeries {
            dt: self.dt,
            dim: self.dim,
            data,
        }
    }

    pub(crate) fn from_raw_unchecked(dt: f64, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % dim, 0);
        TimeSeries { dt, dim, data }
    }
}

/// Per-component affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits mean and (population) standard deviation of every component.
    pub fn fit(series: &TimeSeries) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::invalid("need at least two samples to fit a normalizer"));
        }
        let n = series.len() as f64;
        let d = series.dim();
        let mut mean = vec![0.0; d];
        for row in series.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for row in series.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std: Vec<f64> = var.into_iter().map(f64::sqrt).collect();
        if let Some(k) = std.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateData(format!("component {k} is constant")));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, series: &TimeSeries) -> TimeSeries {
        series.map_rows(|src, dst| {
            for k in 0..src.len() {
                dst[k] = (src[k] - self.mean[k]) / self.std[k];
            }
        })
    }

    pub fn denormalize(&self, series: &TimeSeries) -> TimeSeries {
        series.map_rows(|src, dst| {
            for k in 0..src.len() {
                dst[k] = src[k] * self.std[k] + self.mean[k];
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Steps integrated before recording starts; never part of the output.
    pub n_transient: usize,
    pub seed: u64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_steps: 10_000,
            n_transient: 2_000,
            seed: 0,
        }
    }
}

/// Integrates `n_transient + n_steps` RK4 steps from `u0` and returns the
/// states after each of the last `n_steps` steps.
pub fn generate_trajectory<S: VectorField>(
    system: &S,
    u0: &[f64],
    cfg: &IntegrationConfig,
) -> Result<TimeSeries> {
    let dim = system.dim();
    if u0.len() != dim {
        return Err(Error::invalid(format!(
            "initial condition has length {}, system dimension is {dim}",
            u0.len()
        )));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial condition must be finite"));
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {}", cfg.dt)));
    }

    let mut state = u0.to_vec();
    let mut rk4 = Rk4::new(dim);
    let mut data = Vec::with_capacity(cfg.n_steps * dim);
    let rhs = |u: &[f64], out: &mut [f64]| system.eval(u, out);

    for step in 1..=cfg.n_transient + cfg.n_steps {
        rk4.step(rhs, &mut state, cfg.dt);
        check_bounded(&state, step)?;
        if step > cfg.n_transient {
            data.extend_from_slice(&state);
        }
    }
    Ok(TimeSeries::from_raw_unchecked(cfg.dt, dim, data))
}

pub(crate) fn check_bounded(state: &[f64], step: usize) -> Result<()> {
    let magnitude = state.iter().fold(0.0_f64, |m, v| {
        if v.is_finite() {
            m.max(v.abs())
        } else {
            f64::INFINITY
        }
    });
    if magnitude > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { step, magnitude });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l96_fixed_point_and_forcing() {
        let f = 8.0;
        let rhs = l96_rhs(&[f; 6], f).unwrap();
        assert!(rhs.iter().all(|&v| v == 0.0));
        let rhs = l96_rhs(&[0.0; 6], f).unwrap();
        assert!(rhs.iter().all(|&v| v == 8.0));
    }

    #[test]
    fn l96_hand_evaluated_d4() {
        // k=0: -u3(u2 - u1) - u0 = -1; k=1: -u0(u3 - u2) - u1 = 0;
        // k=2: -u1(u0 - u3) - u2 = 0; k=3: -u2(u1 - u0) - u3 = 0.
        let rhs = l96_rhs(&[1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(rhs, vec![-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn l96_rejects_small_dimension() {
        assert!(matches!(
            l96_rhs(&[1.0, 2.0, 3.0], 8.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(l96_jacobian(&[1.0; 3], 8.0).is_err());
        assert!(SystemSpec::lorenz96(3, 8.0).is_err());
    }

    #[test]
    fn l96_jacobian_at_origin_is_minus_identity() {
        let jac = l96_jacobian(&[0.0; 7], 8.0).unwrap();
        assert_eq!(jac, -DMatrix::<f64>::identity(7, 7));
    }

    #[test]
    fn rk4_zero_field_and_tiny_step() {
        let next = rk4_step(|_, out| out.fill(0.0), &[1.0, -2.0], 0.1).unwrap();
        assert_eq!(next, vec![1.0, -2.0]);
        let spec = SystemSpec::lorenz96(10, 8.0).unwrap();
        let u0 = spec.random_initial_condition(3);
        let next = rk4_step(|u, out| spec.eval(u, out), &u0, 1e-12).unwrap();
        let change = next.iter().zip(&u0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change < 1e-9);
    }

    #[test]
    fn rk4_reports_non_finite() {
        let err = rk4_step(|_, out| out.fill(f64::NAN), &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 0 }));
    }

    #[test]
    fn empty_trajectory_keeps_shape() {
        let spec = SystemSpec::lorenz96(5, 8.0).unwrap();
        let cfg = IntegrationConfig {
            n_steps: 0,
            n_transient: 10,
            ..Default::default()
        };
        let ts = generate_trajectory(&spec, &[8.0, 8.1, 8.0, 8.0, 8.0], &cfg).unwrap();
        assert!(ts.is_empty());
        assert_eq!(ts.dim(), 5);
        assert_eq!(ts.dt(), 0.01);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let blowup = LinearSystem {
            matrix: DMatrix::from_element(1, 1, 100.0),
        };
        let cfg = IntegrationConfig {
            dt: 0.1,
            n_steps: 100,
            n_transient: 0,
            seed: 0,
        };
        match generate_trajectory(&blowup, &[1.0], &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step > 1 && step < 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn time_series_validation() {
        assert!(TimeSeries::new(0.0, 1, vec![1.0]).is_err());
        assert!(TimeSeries::new(0.1, 2, vec![1.0]).is_err());
        assert!(matches!(
            TimeSeries::new(0.1, 1, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { step: 1 })
        ));
        let ts = TimeSeries::from_rows(0.5, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.row(1), &[3.0, 4.0]);
        assert_eq!(ts.component(0), vec![1.0, 3.0]);
    }
}
