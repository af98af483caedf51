use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};

/// Invariants a model is asked to reproduce. Absent fields are not
/// constrained.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantTargets {
    /// Leading Lyapunov exponents, descending, in inverse time units.
    pub leading_les: Option<Vec<f64>>,
    /// Kaplan-Yorke dimension.
    pub fractal_dimension: Option<f64>,
}

impl InvariantTargets {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.leading_les.as_ref().is_none_or(|l| l.is_empty()) && self.fractal_dimension.is_none()
    }

    /// Number of leading exponents required, 0 when none are.
    pub fn n_les(&self) -> usize {
        self.leading_les.as_ref().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(les) = &self.leading_les {
            if les.iter().any(|l| !l.is_finite()) {
                return Err(Error::invalid("target exponents must be finite"));
            }
            if les.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::invalid("target exponents must be sorted descending"));
            }
            if les.first().is_some_and(|&l| l == 0.0) {
                return Err(Error::invalid(
                    "leading target exponent is zero and cannot normalize the loss",
                ));
            }
        }
        if let Some(d) = self.fractal_dimension {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::invalid(format!("target dimension must be >= 0, got {d}")));
            }
        }
        Ok(())
    }
}

/// Weights and windows of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the invariant mismatch.
    pub epsilon1: f64,
    /// Weight of the forecast error.
    pub epsilon2: f64,
    /// First scored forecast step (0 is the first forecast row).
    pub t_i: usize,
    /// Last scored forecast step, inclusive.
    pub t_f: usize,
    /// Number of validation forecasts.
    pub m: usize,
    /// Map steps used to estimate the reservoir's own exponents.
    pub rc_le_steps: usize,
    /// Map steps discarded before accumulating them.
    pub rc_le_transient: usize,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon1 >= 0.0 && self.epsilon2 >= 0.0) || !(self.epsilon1 + self.epsilon2 > 0.0)
        {
            return Err(Error::invalid(format!(
                "need epsilon1, epsilon2 >= 0 with a positive sum, got {} and {}",
                self.epsilon1, self.epsilon2
            )));
        }
        if self.t_i >= self.t_f {
            return Err(Error::invalid(format!(
                "need t_i < t_f, got {} and {}",
                self.t_i, self.t_f
            )));
        }
        if self.m == 0 {
            return Err(Error::invalid("need at least one validation forecast"));
        }
        if self.rc_le_steps == 0 {
            return Err(Error::invalid("rc_le_steps must be positive"));
        }
        Ok(())
    }

    /// Rows each forecast must cover, `t_f + 1`.
    pub fn forecast_len(&self) -> usize {
        self.t_f + 1
    }

    /// Weight that turns the forecast sum into a mean over forecasts, scored
    /// steps and components.
    pub fn mean_forecast_weight(&self, dim: usize) -> f64 {
        1.0 / (self.m * (self.t_f - self.t_i + 1) * dim) as f64
    }
}

/// The two terms of the loss, already weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub invariant: f64,
    pub forecast: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.invariant + self.forecast
    }
}

/// Squared mismatch between targets and model invariants, with exponents
/// scaled by the magnitude of the leading target exponent.
pub fn invariant_mismatch(targets: &InvariantTargets, model: &InvariantTargets) -> Result<f64> {
    let mut total = 0.0;
    if let Some(want) = targets.leading_les.as_ref().filter(|l| !l.is_empty()) {
        let have = model
            .leading_les
            .as_ref()
            .filter(|h| h.len() >= want.len())
            .ok_or_else(|| {
                Error::invalid(format!("model provides fewer than {} exponents", want.len()))
            })?;
        let scale = want[0].abs();
        total += want
            .iter()
            .zip(have)
            .map(|(w, h)| ((w - h) / scale).powi(2))
            .sum::<f64>();
    }
    if let Some(want) = targets.fractal_dimension {
        let have = model
            .fractal_dimension
            .ok_or_else(|| Error::invalid("model provides no fractal dimension"))?;
        total += (want - have).powi(2);
    }
    Ok(total)
}

/// Exponentially time-weighted squared forecast error summed over forecasts.
///
/// Each series holds rows for steps `0..=t_f`; only `t_i..=t_f` are scored,
/// with weight `exp(-(t - t_i) / (t_f - t_i))`.
pub fn forecast_error(cfg: &LossConfig, forecasts: &[TimeSeries], truths: &[TimeSeries]) -> Result<f64> {
    if forecasts.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} forecasts but {} truth segments",
            forecasts.len(),
            truths.len()
        )));
    }
    let span = (cfg.t_f - cfg.t_i) as f64;
    let mut total = 0.0;
    for (f, u) in forecasts.iter().zip(truths) {
        if f.dim() != u.dim() || f.len() <= cfg.t_f || u.len() <= cfg.t_f {
            return Err(Error::invalid(format!(
                "forecast ({}x{}) and truth ({}x{}) must both cover steps up to t_f = {}",
                f.len(),
                f.dim(),
                u.len(),
                u.dim(),
                cfg.t_f
            )));
        }
        for t in cfg.t_i..=cfg.t_f {
            let sq: f64 = f.row(t).iter().zip(u.row(t)).map(|(a, b)| (a - b) * (a - b)).sum();
            total += sq * (-((t - cfg.t_i) as f64) / span).exp();
        }
    }
    Ok(total)
}

/// `ε1 ‖C_u − C_RC‖² + ε2 Σ_k Σ_t ‖u_k^f(t) − u_k(t)‖² exp(−(t − t_i)/(t_f − t_i))`.
pub fn compute_loss(
    cfg: &LossConfig,
    targets: &InvariantTargets,
    model: &InvariantTargets,
    forecasts: &[TimeSeries],
    truths: &[TimeSeries],
) -> Result<f64> {
    Ok(loss_terms(cfg, targets, model, forecasts, truths)?.total())
}

pub(crate) fn loss_terms(
    cfg: &LossConfig,
    targets: &InvariantTargets,
    model: &InvariantTargets,
    forecasts: &[TimeSeries],
    truths: &[TimeSeries],
) -> Result<LossTerms> {
    cfg.validate()?;
    let invariant = if cfg.epsilon1 > 0.0 {
        cfg.epsilon1 * invariant_mismatch(targets, model)?
    } else {
        0.0
    };
    let forecast = cfg.epsilon2 * forecast_error(cfg, forecasts, truths)?;
    Ok(LossTerms { invariant, forecast })
}
