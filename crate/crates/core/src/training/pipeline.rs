use std::ops::Range;

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::invariants::{lyapunov_spectrum_map, LeConfig, LyapunovSpectrum};
use crate::reservoir::{
    build_reservoir, collect_states, forecast, synchronize, train_readout, AutonomousReservoir,
    ReadoutMatrix, Reservoir, ReservoirParams,
};

use super::loss::{loss_terms, InvariantTargets, LossConfig, LossTerms};

/// Loss added for every validation forecast that blows up, and for a
/// reservoir whose own spectrum cannot be computed.
pub const DIVERGENCE_PENALTY: f64 = 1e6;

/// Default number of open-loop steps discarded before states are recorded.
pub const DEFAULT_WASHOUT: usize = 200;

/// Splits a series chronologically into `(train, validation, test)`.
///
/// The first two parts have `floor(T * frac)` rows; the rest is test data.
pub fn split_data(
    series: &TimeSeries,
    train_frac: f64,
    val_frac: f64,
) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "fractions must be positive with sum <= 1, got {train_frac} and {val_frac}"
        )));
    }
    let t = series.len();
    let n_train = (t as f64 * train_frac).floor() as usize;
    let n_val = (t as f64 * val_frac).floor() as usize;
    let lens = [n_train, n_val, t.saturating_sub(n_train + n_val)];
    if lens.contains(&0) {
        return Err(Error::invalid(format!(
            "split of {t} steps into ({}, {}, {}) leaves an empty part",
            lens[0], lens[1], lens[2]
        )));
    }
    Ok((
        series.slice(0..n_train),
        series.slice(n_train..n_train + n_val),
        series.slice(n_train + n_val..t),
    ))
}

/// Index range of the truth rows that a forecast synchronized on `sync`
/// should reproduce: forecast row `j` targets series row `sync.end + 1 + j`.
pub fn truth_range(sync: &Range<usize>, n_steps: usize) -> Range<usize> {
    sync.end + 1..sync.end + 1 + n_steps
}

/// A synchronization segment and the truth that follows it.
#[derive(Debug, Clone)]
pub struct ValidationWindow {
    pub sync: TimeSeries,
    pub truth: TimeSeries,
}

/// `m` windows whose starts are spread evenly over `series`.
pub fn validation_windows(
    series: &TimeSeries,
    m: usize,
    sync_len: usize,
    forecast_len: usize,
) -> Result<Vec<ValidationWindow>> {
    if m == 0 || sync_len == 0 || forecast_len == 0 {
        return Err(Error::invalid("validation windows need m, sync_len and forecast_len > 0"));
    }
    let width = sync_len + 1 + forecast_len;
    if series.len() < width {
        return Err(Error::invalid(format!(
            "validation series of {} steps is shorter than one window of {width}",
            series.len()
        )));
    }
    let room = series.len() - width;
    Ok((0..m)
        .map(|j| {
            let start = if m == 1 { 0 } else { j * room / (m - 1) };
            let sync = start..start + sync_len;
            ValidationWindow {
                truth: series.slice(truth_range(&sync, forecast_len)),
                sync: series.slice(sync),
            }
        })
        .collect())
}

/// A reservoir together with its trained readout.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub reservoir: Reservoir,
    pub readout: ReadoutMatrix,
    /// Reservoir state synchronized to the end of the training data.
    pub last_state: Vec<f64>,
    pub dt: f64,
}

impl TrainedModel {
    /// Builds the reservoir from `seed`, drives it over `train` and fits the
    /// ridge readout.
    pub fn train(params: &ReservoirParams, train: &TimeSeries, washout: usize, seed: u64) -> Result<Self> {
        let reservoir = build_reservoir(params, train.dim(), seed)?;
        let collected = collect_states(&reservoir, train, washout)?;
        let readout = train_readout(&collected.states, &collected.targets, params.beta)?;
        Ok(Self {
            reservoir,
            readout,
            last_state: collected.last_state,
            dt: train.dt(),
        })
    }

    /// Synchronizes from the zero state on `sync` and forecasts `n_steps`.
    pub fn forecast_after(&self, sync: &TimeSeries, n_steps: usize) -> Result<TimeSeries> {
        let r0 = synchronize(&self.reservoir, sync, &vec![0.0; self.reservoir.size()])?;
        forecast(&self.reservoir, &self.readout, &r0, n_steps, self.dt)
    }

    /// Leading `n_exponents` of the closed-loop reservoir, per unit time,
    /// started from the end of the training data.
    pub fn spectrum(&self, n_exponents: usize, n_steps: usize, n_transient: usize) -> Result<LyapunovSpectrum> {
        let map = AutonomousReservoir::new(&self.reservoir, &self.readout)?;
        let cfg = LeConfig {
            n_transient,
            ..LeConfig::new(self.dt, n_steps, n_exponents)
        };
        lyapunov_spectrum_map(&map, &self.last_state, &cfg)
    }

    /// Closed-loop run from the end of the training data.
    pub fn free_run(&self, n_steps: usize) -> Result<TimeSeries> {
        forecast(&self.reservoir, &self.readout, &self.last_state, n_steps, self.dt)
    }
}

/// Outcome of scoring one hyperparameter candidate.
#[derive(Debug, Clone)]
pub struct CandidateEvaluation {
    pub loss: f64,
    pub terms: LossTerms,
    /// Validation forecasts that diverged and were replaced by the penalty.
    pub diverged_forecasts: usize,
    /// Invariants of the closed-loop reservoir, when the targets needed them.
    pub rc_invariants: Option<InvariantTargets>,
}

/// Invariants of a trained model in the shape of `targets`.
pub fn model_invariants(
    model: &TrainedModel,
    targets: &InvariantTargets,
    cfg: &LossConfig,
) -> Result<InvariantTargets> {
    let k = targets.n_les();
    let need_dim = targets.fractal_dimension.is_some();
    let n = if need_dim { k.max(model.reservoir.input_dim()) } else { k };
    let spectrum = model.spectrum(n.max(1), cfg.rc_le_steps, cfg.rc_le_transient)?;
    Ok(InvariantTargets {
        leading_les: (k > 0).then(|| spectrum.leading(k).to_vec()),
        fractal_dimension: if need_dim {
            Some(spectrum.kaplan_yorke()?)
        } else {
            None
        },
    })
}

/// Trains a model for `params` and scores it on the validation windows.
///
/// Diverged forecasts and a failed reservoir spectrum cost
/// [`DIVERGENCE_PENALTY`] each instead of aborting; a reservoir that cannot
/// be built is an error.
pub fn evaluate_candidate(
    params: &ReservoirParams,
    train: &TimeSeries,
    windows: &[ValidationWindow],
    targets: &InvariantTargets,
    loss_cfg: &LossConfig,
    washout: usize,
    seed: u64,
) -> Result<CandidateEvaluation> {
    loss_cfg.validate()?;
    targets.validate()?;
    if windows.len() != loss_cfg.m {
        return Err(Error::invalid(format!(
            "loss expects {} validation windows, got {}",
            loss_cfg.m,
            windows.len()
        )));
    }
    let model = TrainedModel::train(params, train, washout, seed)?;

    let n_steps = loss_cfg.forecast_len();
    let mut forecasts = Vec::with_capacity(windows.len());
    let mut truths = Vec::with_capacity(windows.len());
    let mut diverged = 0;
    for w in windows {
        match model.forecast_after(&w.sync, n_steps) {
            Ok(f) => {
                forecasts.push(f);
                truths.push(w.truth.clone());
            }
            Err(Error::Divergence { .. }) => diverged += 1,
            Err(e) => return Err(e),
        }
    }

    let constrained = loss_cfg.epsilon1 > 0.0 && !targets.is_empty();
    let (rc_invariants, spectrum_failed) = if constrained {
        match model_invariants(&model, targets, loss_cfg) {
            Ok(inv) => (Some(inv), false),
            Err(Error::IllConditioned(_) | Error::Divergence { .. } | Error::NonFinite { .. }) => {
                (None, true)
            }
            Err(e) => return Err(e),
        }
    } else {
        (None, false)
    };

    let scored_targets = if spectrum_failed { InvariantTargets::none() } else { targets.clone() };
    let model_inv = rc_invariants.clone().unwrap_or_default();
    let mut terms = loss_terms(loss_cfg, &scored_targets, &model_inv, &forecasts, &truths)?;
    terms.forecast += diverged as f64 * DIVERGENCE_PENALTY;
    if spectrum_failed {
        terms.invariant += DIVERGENCE_PENALTY;
    }
    Ok(CandidateEvaluation {
        loss: terms.total(),
        terms,
        diverged_forecasts: diverged,
        rc_invariants,
    })
}
