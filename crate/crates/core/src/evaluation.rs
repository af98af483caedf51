//! Forecast skill and invariant comparison.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::invariants::LyapunovSpectrum;
use crate::training::{truth_range, TrainedModel};

/// Default VPT threshold on the normalized RMSE.
pub const DEFAULT_EPSILON: f64 = 0.3;

/// Long-run mean and standard deviation of every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimateStats {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ClimateStats {
    pub fn new(mean: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mean.len() != sigma.len() {
            return Err(Error::invalid("mean and sigma lengths differ"));
        }
        if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("climate sigma components must be positive"));
        }
        Ok(Self { mean, sigma })
    }

    pub fn from_series(series: &TimeSeries) -> Result<Self> {
        let n = crate::dynamics::Normalizer::fit(series)?;
        Self::new(n.mean, n.std)
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }
}

/// `RMSE(t) = sqrt(1/D Σ_i ((f_i(t) - u_i(t)) / σ_i)²)` for every row.
pub fn normalized_rmse(forecast: &TimeSeries, truth: &TimeSeries, stats: &ClimateStats) -> Result<Vec<f64>> {
    if forecast.len() != truth.len() || forecast.dim() != truth.dim() || truth.dim() != stats.dim() {
        return Err(Error::invalid(format!(
            "shape mismatch: forecast {}x{}, truth {}x{}, stats dim {}",
            forecast.len(),
            forecast.dim(),
            truth.len(),
            truth.dim(),
            stats.dim()
        )));
    }
    let d = truth.dim() as f64;
    Ok(forecast
        .rows()
        .zip(truth.rows())
        .map(|(f, u)| {
            let s: f64 = f
                .iter()
                .zip(u)
                .zip(&stats.sigma)
                .map(|((a, b), sig)| ((a - b) / sig).powi(2))
                .sum();
            (s / d).sqrt()
        })
        .collect())
}

/// Valid prediction time of one forecast, in Lyapunov times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vpt {
    pub lyapunov_times: f64,
    /// The error never exceeded the threshold; the value is the horizon.
    pub censored: bool,
}

/// `t* dt λ1` for the first `t*` with `rmse[t*] > epsilon`, or the horizon
/// `T dt λ1` (censored) when the threshold is never crossed.
pub fn valid_prediction_time(rmse: &[f64], epsilon: f64, dt: f64, lambda1: f64) -> Vpt {
    match rmse.iter().position(|&e| e > epsilon || e.is_nan()) {
        Some(t) => Vpt {
            lyapunov_times: t as f64 * dt * lambda1,
            censored: false,
        },
        None => Vpt {
            lyapunov_times: rmse.len() as f64 * dt * lambda1,
            censored: true,
        },
    }
}

/// Anything that can forecast after synchronizing on a slice of a series.
pub trait Forecaster: Sync {
    /// Forecast of `n_steps` rows; row `j` targets `series` row
    /// `sync.end + 1 + j`.
    fn forecast_window(&self, series: &TimeSeries, sync: Range<usize>, n_steps: usize) -> Result<TimeSeries>;
}

impl Forecaster for TrainedModel {
    fn forecast_window(&self, series: &TimeSeries, sync: Range<usize>, n_steps: usize) -> Result<TimeSeries> {
        self.forecast_after(&series.slice(sync), n_steps)
    }
}

/// Returns the true continuation; a perfect forecaster for checks.
pub struct TruthReplay;

impl Forecaster for TruthReplay {
    fn forecast_window(&self, series: &TimeSeries, sync: Range<usize>, n_steps: usize) -> Result<TimeSeries> {
        Ok(series.slice(truth_range(&sync, n_steps)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VptConfig {
    pub n_ics: usize,
    pub sync_len: usize,
    /// Forecast steps per initial condition.
    pub horizon: usize,
    pub epsilon: f64,
}

impl Default for VptConfig {
    fn default() -> Self {
        Self {
            n_ics: 200,
            sync_len: 200,
            horizon: 900,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl VptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ics == 0 || self.sync_len == 0 || self.horizon == 0 {
            return Err(Error::invalid("n_ics, sync_len and horizon must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Rows consumed by one initial condition.
    pub fn window(&self) -> usize {
        self.sync_len + 1 + self.horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VptReport {
    pub vpt_values: Vec<f64>,
    pub censored: Vec<bool>,
    pub mean: f64,
    pub median: f64,
    pub epsilon: f64,
    pub lambda1: f64,
}

impl VptReport {
    pub fn from_values(vpts: &[Vpt], epsilon: f64, lambda1: f64) -> Result<Self> {
        if vpts.is_empty() {
            return Err(Error::invalid("VPT report needs at least one value"));
        }
        let values: Vec<f64> = vpts.iter().map(|v| v.lyapunov_times).collect();
        Ok(Self {
            mean: mean(&values),
            median: median(&values),
            censored: vpts.iter().map(|v| v.censored).collect(),
            vpt_values: values,
            epsilon,
            lambda1,
        })
    }

    pub fn n_censored(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// VPTs over `n_ics` consecutive non-overlapping windows of `test`.
///
/// A forecast that diverges scores the steps completed before blowing up,
/// which is a VPT no larger than the divergence step.
pub fn vpt_distribution<F: Forecaster>(
    model: &F,
    test: &TimeSeries,
    stats: &ClimateStats,
    cfg: &VptConfig,
    lambda1: f64,
) -> Result<VptReport> {
    cfg.validate()?;
    if !(lambda1 > 0.0) {
        return Err(Error::invalid(format!("lambda1 must be positive, got {lambda1}")));
    }
    let width = cfg.window();
    if cfg.n_ics * width > test.len() {
        return Err(Error::invalid(format!(
            "{} initial conditions of {width} steps need {} test steps, have {}",
            cfg.n_ics,
            cfg.n_ics * width,
            test.len()
        )));
    }
    let vpts = (0..cfg.n_ics)
        .into_par_iter()
        .map(|ic| {
            let start = ic * width;
            let sync = start..start + cfg.sync_len;
            let truth = test.slice(truth_range(&sync, cfg.horizon));
            match model.forecast_window(test, sync, cfg.horizon) {
                Ok(f) => {
                    let rmse = normalized_rmse(&f, &truth, stats)?;
                    Ok(valid_prediction_time(&rmse, cfg.epsilon, test.dt(), lambda1))
                }
                Err(Error::Divergence { step, .. }) => Ok(Vpt {
                    lyapunov_times: (step - 1) as f64 * test.dt() * lambda1,
                    censored: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    VptReport::from_values(&vpts, cfg.epsilon, lambda1)
}

/// Differences between a model spectrum and the true one.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantComparison {
    pub lambda1_model: f64,
    pub lambda1_truth: f64,
    /// `|λ1_model − λ1_truth| / |λ1_truth|`.
    pub lambda1_relative_error: f64,
    /// Over the exponents both spectra provide.
    pub exponent_errors: Vec<f64>,
    pub ky_model: f64,
    pub ky_truth: f64,
    pub ky_abs_error: f64,
}

pub fn compare_invariants(model: &LyapunovSpectrum, truth: &LyapunovSpectrum) -> Result<InvariantComparison> {
    let (Some(lm), Some(lt)) = (model.largest(), truth.largest()) else {
        return Err(Error::invalid("spectra must be non-empty"));
    };
    let ky_model = model.kaplan_yorke()?;
    let ky_truth = truth.kaplan_yorke()?;
    Ok(InvariantComparison {
        lambda1_model: lm,
        lambda1_truth: lt,
        lambda1_relative_error: (lm - lt).abs() / lt.abs(),
        exponent_errors: model
            .exponents()
            .iter()
            .zip(truth.exponents())
            .map(|(a, b)| a - b)
            .collect(),
        ky_model,
        ky_truth,
        ky_abs_error: (ky_model - ky_truth).abs(),
    })
}
