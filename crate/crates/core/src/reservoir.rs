//! Leaky-tanh reservoir computer.
//!
//! The driven update is
//! `r(t) = α tanh(A r(t-1) + W_in u(t-1) + σ_b) + (1 - α) r(t-1)`; closing the
//! loop through the linear readout `u ≈ W_out r` gives the autonomous map
//! used for forecasting and for the reservoir's own Lyapunov spectrum.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::invariants::TangentMap;

/// Global hyperparameters of a reservoir; the individual weights are drawn
/// from a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirParams {
    /// Number of reservoir nodes `N`.
    pub size: usize,
    /// Fraction of nonzero adjacency entries `ρ_A`.
    pub density: f64,
    /// Target spectral radius `ρ_SR` of the adjacency matrix.
    pub spectral_radius: f64,
    /// Input weights are uniform on `[-σ, σ]`.
    pub input_scale: f64,
    /// Bias `σ_b` added to every node.
    pub bias: f64,
    /// Leak rate `α`.
    pub leak_rate: f64,
    /// Ridge regularization `β` of the readout.
    pub beta: f64,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        Self {
            size: 400,
            density: 0.02,
            spectral_radius: 0.9,
            input_scale: 0.5,
            bias: 0.0,
            leak_rate: 1.0,
            beta: 1e-6,
        }
    }
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        if self.size < 10 {
            return fail(format!("reservoir size must be >= 10, got {}", self.size));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return fail(format!("density must be in (0, 1], got {}", self.density));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return fail(format!(
                "spectral radius must be positive, got {}",
                self.spectral_radius
            ));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return fail(format!("input scale must be positive, got {}", self.input_scale));
        }
        if !self.bias.is_finite() {
            return fail("bias must be finite".into());
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return fail(format!("leak rate must be in (0, 1], got {}", self.leak_rate));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be non-negative, got {}", self.beta));
        }
        Ok(())
    }
}

/// Square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets sorted by row then column.
    fn from_sorted_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut row_ptr = vec![0; n + 1];
        for &(r, _, _) in triplets {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx: triplets.iter().map(|t| t.1).collect(),
            values: triplets.iter().map(|t| t.2).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            *o = self.col_idx[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    /// `A · M` for a dense `M` with `n` rows.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, m.ncols());
        for c in 0..m.ncols() {
            let col = m.column(c);
            let src = col.as_slice();
            let mut dst = out.column_mut(c);
            self.matvec(src, dst.as_mut_slice());
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                dense[(i, self.col_idx[k])] = self.values[k];
            }
        }
        dense
    }

    fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

const POWER_ITERATIONS: usize = 1000;
const POWER_TOL: f64 = 1e-6;

/// Spectral radius estimate from power iteration.
///
/// The estimate is the geometric-mean growth factor `‖A x_k‖` over the
/// trailing half of the iterations, which also converges when the dominant
/// eigenvalues form a complex-conjugate pair and the iterate rotates instead
/// of settling. Iteration stops early once two successive 100-step estimates
/// agree to `tol` (relative).
pub fn spectral_radius(a: &SparseMatrix, max_iter: usize, tol: f64, seed: u64) -> f64 {
    let n = a.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = l2(&x);
    x.iter_mut().for_each(|v| *v /= norm);
    let mut y = vec![0.0; n];
    let mut logs = Vec::with_capacity(max_iter);
    let mut last_estimate = f64::NAN;
    for it in 1..=max_iter {
        a.matvec(&x, &mut y);
        let growth = l2(&y);
        if growth == 0.0 || !growth.is_finite() {
            return 0.0;
        }
        logs.push(growth.ln());
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / growth;
        }
        if it % 100 == 0 {
            let tail = &logs[it / 2..];
            let estimate = (tail.iter().sum::<f64>() / tail.len() as f64).exp();
            if (estimate - last_estimate).abs() <= tol * estimate {
                return estimate;
            }
            last_estimate = estimate;
        }
    }
    let tail = &logs[logs.len() / 2..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// An instantiated reservoir: fixed random adjacency and input weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    adjacency: SparseMatrix,
    /// `N × D`, column-major.
    input_weights: DMatrix<f64>,
    params: ReservoirParams,
    /// Seed actually used (after any retries).
    seed: u64,
}

const BUILD_RETRIES: u64 = 5;

/// Draws a reservoir for `input_dim`-dimensional data.
///
/// `A` has exactly `round(ρ_A N²)` nonzeros at uniformly sampled positions
/// with weights uniform on `[-1, 1]`, rescaled to spectral radius `ρ_SR`.
/// `W_in` is dense uniform on `[-σ, σ]`. A draw whose spectral radius is
/// numerically zero is retried with `seed + 1`, up to five times.
pub fn build_reservoir(params: &ReservoirParams, input_dim: usize, seed: u64) -> Result<Reservoir> {
    params.validate()?;
    if input_dim == 0 {
        return Err(Error::invalid("input dimension must be positive"));
    }
    let n = params.size;
    for attempt in 0..=BUILD_RETRIES {
        let seed = seed.wrapping_add(attempt);
        let mut adjacency = random_adjacency(n, params.density, seed);
        let radius = spectral_radius(&adjacency, POWER_ITERATIONS, POWER_TOL, seed ^ 0x5eed);
        if radius <= 1e-12 {
            continue;
        }
        adjacency.scale(params.spectral_radius / radius);
        let input_weights = random_input_weights(n, input_dim, params.input_scale, seed);
        return Ok(Reservoir {
            adjacency,
            input_weights,
            params: *params,
            seed,
        });
    }
    Err(Error::ReservoirBuild(format!(
        "adjacency spectral radius vanished for {} consecutive seeds starting at {seed}",
        BUILD_RETRIES + 1
    )))
}

fn random_adjacency(n: usize, density: f64, seed: u64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let total = n * n;
    let nnz = ((density * total as f64).round() as usize).clamp(1, total);
    let mut positions = index::sample(&mut rng, total, nnz).into_vec();
    positions.sort_unstable();
    let triplets: Vec<(usize, usize, f64)> = positions
        .into_iter()
        .map(|p| (p / n, p % n, rng.random_range(-1.0..=1.0)))
        .collect();
    SparseMatrix::from_sorted_triplets(n, &triplets)
}

fn random_input_weights(n: usize, d: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-scale..=scale))
}

impl Reservoir {
    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn size(&self) -> usize {
        self.params.size
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.ncols()
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn input_weights(&self) -> &DMatrix<f64> {
        &self.input_weights
    }

    /// Pre-activation `A r + W_in u + σ_b`.
    fn preactivation(&self, r: &[f64], u: &[f64], z: &mut [f64]) {
        self.adjacency.matvec(r, z);
        for (j, &uj) in u.iter().enumerate() {
            let col = self.input_weights.column(j);
            for (zi, wij) in z.iter_mut().zip(col.iter()) {
                *zi += wij * uj;
            }
        }
        let b = self.params.bias;
        z.iter_mut().for_each(|zi| *zi += b);
    }

    /// One driven update without argument checks; `out` must not alias `r_prev`.
    pub fn drive_into(&self, r_prev: &[f64], u_prev: &[f64], out: &mut [f64]) {
        self.preactivation(r_prev, u_prev, out);
        let alpha = self.params.leak_rate;
        for (o, r) in out.iter_mut().zip(r_prev) {
            *o = alpha * o.tanh() + (1.0 - alpha) * r;
        }
    }

    fn check_dims(&self, r: &[f64], u: Option<&[f64]>) -> Result<()> {
        if r.len() != self.size() {
            return Err(Error::invalid(format!(
                "reservoir state has length {}, expected {}",
                r.len(),
                self.size()
            )));
        }
        if let Some(u) = u {
            if u.len() != self.input_dim() {
                return Err(Error::invalid(format!(
                    "input has length {}, expected {}",
                    u.len(),
                    self.input_dim()
                )));
            }
        }
        Ok(())
    }
}

/// One open-loop update of the reservoir.
pub fn drive(res: &Reservoir, r_prev: &[f64], u_prev: &[f64]) -> Result<Vec<f64>> {
    res.check_dims(r_prev, Some(u_prev))?;
    if r_prev.iter().chain(u_prev).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    let mut out = vec![0.0; res.size()];
    res.drive_into(r_prev, u_prev, &mut out);
    Ok(out)
}

fn check_series(res: &Reservoir, series: &TimeSeries) -> Result<()> {
    if series.dim() != res.input_dim() {
        return Err(Error::invalid(format!(
            "series dimension {} does not match reservoir input dimension {}",
            series.dim(),
            res.input_dim()
        )));
    }
    Ok(())
}

/// Drives the reservoir open-loop through every row of `series` and returns
/// the final state, which is aligned with the row after the series ends.
pub fn synchronize(res: &Reservoir, series: &TimeSeries, r_init: &[f64]) -> Result<Vec<f64>> {
    res.check_dims(r_init, None)?;
    check_series(res, series)?;
    let mut r = r_init.to_vec();
    let mut next = vec![0.0; res.size()];
    for u in series.rows() {
        res.drive_into(&r, u, &mut next);
        std::mem::swap(&mut r, &mut next);
    }
    Ok(r)
}

/// Reservoir states and their aligned targets from an open-loop pass.
#[derive(Debug, Clone)]
pub struct StateCollection {
    /// `N × T'`; column `c` is `r(washout + c)`.
    pub states: DMatrix<f64>,
    /// `D × T'`; column `c` is `u(washout + c)`.
    pub targets: DMatrix<f64>,
    /// State after the final row, i.e. synchronized to the step past the series.
    pub last_state: Vec<f64>,
}

/// Drives from the zero state over `series` and keeps the pairs
/// `(r(t), u(t))` for `t >= washout`, where `r(t)` has seen `u(0..t)`.
pub fn collect_states(res: &Reservoir, series: &TimeSeries, washout: usize) -> Result<StateCollection> {
    check_series(res, series)?;
    let t_len = series.len();
    if washout >= t_len {
        return Err(Error::invalid(format!(
            "washout {washout} must be smaller than the series length {t_len}"
        )));
    }
    let n = res.size();
    let kept = t_len - washout;
    let mut states = DMatrix::zeros(n, kept);
    let mut r = vec![0.0; n];
    let mut next = vec![0.0; n];
    for t in 0..t_len {
        if t >= washout {
            states.column_mut(t - washout).copy_from_slice(&r);
        }
        res.drive_into(&r, series.row(t), &mut next);
        std::mem::swap(&mut r, &mut next);
    }
    let targets = DMatrix::from_fn(series.dim(), kept, |k, c| series.row(washout + c)[k]);
    Ok(StateCollection {
        states,
        targets,
        last_state: r,
    })
}

/// Linear readout `u ≈ W_out r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutMatrix {
    /// `D × N`.
    pub weights: DMatrix<f64>,
}

impl ReadoutMatrix {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("readout weights must be finite"));
        }
        Ok(Self { weights })
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn apply_into(&self, r: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &rj) in r.iter().enumerate() {
            let col = self.weights.column(j);
            for (o, w) in out.iter_mut().zip(col.iter()) {
                *o += w * rj;
            }
        }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.apply_into(r, &mut out);
        out
    }
}

/// Ridge regression `W_out = u rᵀ (r rᵀ + β I)⁻¹`, solved through a Cholesky
/// factorization of the regularized Gram matrix.
pub fn train_readout(states: &DMatrix<f64>, targets: &DMatrix<f64>, beta: f64) -> Result<ReadoutMatrix> {
    if states.ncols() == 0 || states.ncols() != targets.ncols() {
        return Err(Error::invalid(format!(
            "need matching, non-empty state ({}) and target ({}) columns",
            states.ncols(),
            targets.ncols()
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be non-negative, got {beta}")));
    }
    let n = states.nrows();
    let mut gram = states * states.transpose();
    for i in 0..n {
        gram[(i, i)] += beta;
    }
    let rhs = states * targets.transpose();

    let singular = || {
        Error::IllConditioned(format!(
            "ridge normal equations are singular at beta = {beta:e}; use beta > 0"
        ))
    };
    let chol = gram.cholesky().ok_or_else(singular)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if beta == 0.0 && (lo / hi).powi(2) < 1e-15 {
        return Err(singular());
    }
    let solution = chol.solve(&rhs);
    ReadoutMatrix::new(solution.transpose())
}

/// Runs the closed loop `r(t) = drive(r(t-1), W_out r(t-1))` for `n_steps`
/// and returns `W_out r(t)` for `t = 1..=n_steps`.
pub fn forecast(
    res: &Reservoir,
    readout: &ReadoutMatrix,
    r0: &[f64],
    n_steps: usize,
    dt: f64,
) -> Result<TimeSeries> {
    res.check_dims(r0, None)?;
    let d = readout.output_dim();
    if d != res.input_dim() || readout.weights.ncols() != res.size() {
        return Err(Error::invalid("readout shape does not match the reservoir"));
    }
    let mut r = r0.to_vec();
    let mut next = vec![0.0; res.size()];
    let mut u = vec![0.0; d];
    let mut data = Vec::with_capacity(n_steps * d);
    for step in 1..=n_steps {
        readout.apply_into(&r, &mut u);
        res.drive_into(&r, &u, &mut next);
        std::mem::swap(&mut r, &mut next);
        readout.apply_into(&r, &mut u);
        if u.iter().chain(&r).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step,
                magnitude: f64::INFINITY,
            });
        }
        data.extend_from_slice(&u);
    }
    if n_steps == 0 {
        return TimeSeries::empty(dt, d);
    }
    TimeSeries::new(dt, d, data)
}

/// Jacobian of the autonomous map at `r`:
/// `α diag(1 - tanh²(z)) (A + W_in W_out) + (1 - α) I`.
pub fn rc_jacobian(res: &Reservoir, readout: &ReadoutMatrix, r: &[f64]) -> Result<DMatrix<f64>> {
    res.check_dims(r, None)?;
    let auto = AutonomousReservoir::new(res, readout)?;
    let slopes = auto.slopes(r);
    let alpha = res.params.leak_rate;
    let coupled = res.adjacency.to_dense() + &res.input_weights * &readout.weights;
    let mut jac = coupled;
    for (i, s) in slopes.iter().enumerate() {
        jac.row_mut(i).scale_mut(alpha * s);
        jac[(i, i)] += 1.0 - alpha;
    }
    Ok(jac)
}

/// The closed-loop reservoir as a discrete map, for Lyapunov computations.
pub struct AutonomousReservoir<'a> {
    res: &'a Reservoir,
    readout: &'a ReadoutMatrix,
}

impl<'a> AutonomousReservoir<'a> {
    pub fn new(res: &'a Reservoir, readout: &'a ReadoutMatrix) -> Result<Self> {
        if readout.output_dim() != res.input_dim() || readout.weights.ncols() != res.size() {
            return Err(Error::invalid("readout shape does not match the reservoir"));
        }
        Ok(Self { res, readout })
    }

    /// `tanh'(z)` at the pre-activation of the closed loop.
    fn slopes(&self, r: &[f64]) -> Vec<f64> {
        let u = self.readout.apply(r);
        let mut z = vec![0.0; r.len()];
        self.res.preactivation(r, &u, &mut z);
        z.into_iter()
            .map(|zi| {
                let t = zi.tanh();
                1.0 - t * t
            })
            .collect()
    }
}

impl TangentMap for AutonomousReservoir<'_> {
    fn dim(&self) -> usize {
        self.res.size()
    }

    fn step(&self, state: &[f64], next: &mut [f64]) {
        let u = self.readout.apply(state);
        self.res.drive_into(state, &u, next);
    }

    fn tangent(&self, state: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
        let slopes = DVector::from_vec(self.slopes(state));
        let alpha = self.res.params.leak_rate;
        let feedback = &self.res.input_weights * (&self.readout.weights * vectors);
        let mut out = self.res.adjacency.mul_dense(vectors) + feedback;
        for mut col in out.column_iter_mut() {
            col.component_mul_assign(&slopes);
        }
        out * alpha + vectors * (1.0 - alpha)
    }
}
