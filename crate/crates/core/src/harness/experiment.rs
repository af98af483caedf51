//! Data preparation, single experiments and multi-initialization comparisons.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{generate_trajectory, IntegrationConfig, Normalizer, TimeSeries, VectorField};
use crate::error::{Error, Result};
use crate::evaluation::{compare_invariants, mean, median, vpt_distribution, ClimateStats, InvariantComparison, VptReport};
use crate::invariants::{lyapunov_spectrum_ode, LeConfig, LyapunovSpectrum};
use crate::reservoir::ReservoirParams;
use crate::training::{
    cma_es_minimize, evaluate_candidate, split_data, validation_windows, CandidateEvaluation,
    Evaluation, InvariantTargets, LossConfig, TrainedModel, ValidationWindow,
};

use super::config::{ExperimentConfig, InvariantsProvided, SearchConfig};
use super::persist::{
    ensure_dir, fmt_f64, save_model, write_history_csv, write_series_csv, write_spectrum_csv,
    write_text, write_vpt_csv, Metadata, ModelInfo, VERSION,
};
use super::seeds::{config_hash, derive_seed};

/// Name of the marker file left in the output directory when a run fails.
pub const FAILURE_MARKER: &str = "FAILED";

/// Everything shared by the runs of one config: data splits, the true
/// system's invariants and the derived loss settings.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub normalizer: Normalizer,
    /// Splits in normalized units.
    pub train: TimeSeries,
    pub val: TimeSeries,
    pub test: TimeSeries,
    pub windows: Vec<ValidationWindow>,
    pub truth_spectrum: LyapunovSpectrum,
    pub truth_ky: f64,
    /// Climate statistics in physical units.
    pub climate: ClimateStats,
    /// The same statistics in normalized units.
    pub climate_normalized: ClimateStats,
    pub loss: LossConfig,
    pub config_hash: String,
}

impl PreparedData {
    pub fn lambda1(&self) -> f64 {
        self.truth_spectrum.exponents()[0]
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Generates data, splits and normalizes it, and computes the true invariants.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let hash = config_hash(&cfg.to_toml_string()?);
    let system = &cfg.system;
    let d = &cfg.data;
    let integration = |n_steps, seed| IntegrationConfig {
        dt: d.dt,
        n_steps,
        n_transient: d.n_transient,
        seed,
    };

    let data_seed = derive_seed(cfg.master_seed, &["data"]);
    let raw = stage(
        "generate",
        generate_trajectory(system, &system.random_initial_condition(data_seed), &integration(d.n_steps, data_seed)),
    )?;
    let (train, val, test) = stage("split", split_data(&raw, d.train_frac, d.val_frac))?;
    let normalizer = stage("normalize", Normalizer::fit(&train))?;

    let truth_spectrum = stage("truth-invariants", {
        let cfg_le = LeConfig::new(d.dt, cfg.evaluation.truth_le_steps, system.dim());
        lyapunov_spectrum_ode(system, train.row(0), &cfg_le)
    })?;
    let truth_ky = stage("truth-invariants", truth_spectrum.kaplan_yorke())?;
    let lambda1 = truth_spectrum.exponents()[0];
    if !(lambda1 > 0.0) {
        return Err(Error::DegenerateData(format!(
            "largest exponent of the true system is {lambda1}; VPT needs a chaotic system"
        ))
        .in_stage("truth-invariants"));
    }

    let climate = stage("climate", {
        let seed = derive_seed(cfg.master_seed, &["climate"]);
        generate_trajectory(
            system,
            &system.random_initial_condition(seed),
            &integration(cfg.evaluation.climate_steps, seed),
        )
        .and_then(|run| ClimateStats::from_series(&run))
    })?;
    let climate_normalized = ClimateStats::new(
        climate
            .mean
            .iter()
            .zip(&normalizer.mean)
            .zip(&normalizer.std)
            .map(|((m, nm), ns)| (m - nm) / ns)
            .collect(),
        climate.sigma.iter().zip(&normalizer.std).map(|(s, ns)| s / ns).collect(),
    )?;

    let l = &cfg.loss;
    let t_f = l
        .t_f
        .unwrap_or_else(|| ((5.0 / (lambda1 * d.dt)).round() as usize).max(l.t_i + 1));
    let mut loss = LossConfig {
        epsilon1: l.epsilon1,
        epsilon2: 1.0,
        t_i: l.t_i,
        t_f,
        m: l.m,
        rc_le_steps: l.rc_le_steps,
        rc_le_transient: l.rc_le_transient,
    };
    loss.epsilon2 = l.epsilon2.unwrap_or(loss.mean_forecast_weight(system.dim()));
    stage("loss", loss.validate())?;

    let windows = stage(
        "split",
        validation_windows(&normalizer.normalize(&val), l.m, d.sync_len, loss.forecast_len()),
    )?;

    Ok(PreparedData {
        train: normalizer.normalize(&train),
        val: normalizer.normalize(&val),
        test: normalizer.normalize(&test),
        normalizer,
        windows,
        truth_spectrum,
        truth_ky,
        climate,
        climate_normalized,
        loss,
        config_hash: hash,
    })
}

/// Constraint set for a variant, read off the true spectrum.
pub fn targets_for(variant: InvariantsProvided, truth: &LyapunovSpectrum) -> Result<InvariantTargets> {
    let k = variant.n_les();
    if k > truth.len() {
        return Err(Error::Config(format!(
            "invariants asks for {k} exponents but the system has {}",
            truth.len()
        )));
    }
    Ok(InvariantTargets {
        leading_les: (k > 0).then(|| truth.leading(k).to_vec()),
        fractal_dimension: if variant.dimension() {
            Some(truth.kaplan_yorke()?)
        } else {
            None
        },
    })
}

/// Seeds of one reservoir initialization. They do not depend on the variant,
/// so variants compared at the same index are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSeeds {
    pub reservoir: u64,
    pub search: u64,
}

impl RunSeeds {
    pub fn derive(master: u64, init: usize) -> Self {
        let init = init.to_string();
        Self {
            reservoir: derive_seed(master, &["init", &init, "reservoir"]),
            search: derive_seed(master, &["init", &init, "search"]),
        }
    }
}

/// Closed-loop statistics of a trained model, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractorCheck {
    pub steps: usize,
    pub diverged: bool,
    pub max_abs: f64,
    pub std: Vec<f64>,
    /// `max_k |std_k − σ_k| / σ_k` against the climate statistics.
    pub max_relative_std_error: f64,
}

fn attractor_check(model: &TrainedModel, data: &PreparedData, steps: usize) -> Result<AttractorCheck> {
    match model.free_run(steps) {
        Ok(run) => {
            let physical = data.normalizer.denormalize(&run);
            let std = Normalizer::fit(&physical).map(|n| n.std).unwrap_or_else(|_| vec![0.0; physical.dim()]);
            let err = std
                .iter()
                .zip(&data.climate.sigma)
                .map(|(s, c)| (s - c).abs() / c)
                .fold(0.0, f64::max);
            Ok(AttractorCheck {
                steps,
                diverged: false,
                max_abs: physical.max_abs(),
                std,
                max_relative_std_error: err,
            })
        }
        Err(Error::Divergence { .. }) => Ok(AttractorCheck {
            steps,
            diverged: true,
            max_abs: f64::INFINITY,
            std: Vec::new(),
            max_relative_std_error: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

/// Outcome of one (variant, initialization) run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub variant: InvariantsProvided,
    pub init: usize,
    pub seeds: RunSeeds,
    pub best_params: ReservoirParams,
    pub best_loss: f64,
    /// Re-evaluation of the best candidate.
    pub best_evaluation: CandidateEvaluation,
    pub history: Vec<Evaluation>,
    pub model: TrainedModel,
    pub rc_spectrum: LyapunovSpectrum,
    pub comparison: InvariantComparison,
    pub vpt: VptReport,
    pub attractor: AttractorCheck,
    /// Wall-clock seconds per stage; excluded from persisted reports.
    pub timings: Vec<(&'static str, f64)>,
}

/// CMA-ES search, retraining, and evaluation for one variant and one
/// reservoir initialization.
pub fn run_variant(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    variant: InvariantsProvided,
    init: usize,
) -> Result<RunReport> {
    let seeds = RunSeeds::derive(cfg.master_seed, init);
    let targets = stage("targets", targets_for(variant, &data.truth_spectrum))?;
    let space = stage("search", cfg.search.space())?;
    let size = cfg.reservoir.size;
    let washout = cfg.data.washout;
    let mut timings = Vec::new();

    let clock = Instant::now();
    let objective = |point: &[f64]| {
        let params = SearchConfig::params_at(point, size);
        evaluate_candidate(&params, &data.train, &data.windows, &targets, &data.loss, washout, seeds.reservoir)
            .map_or(f64::INFINITY, |e| e.loss)
    };
    let search = stage("search", cma_es_minimize(objective, &space, &cfg.cma.to_config(seeds.search), None))?;
    timings.push(("search", clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let best_params = SearchConfig::params_at(&search.best_point, size);
    let best_evaluation = stage(
        "retrain",
        evaluate_candidate(&best_params, &data.train, &data.windows, &targets, &data.loss, washout, seeds.reservoir),
    )?;
    let model = stage("retrain", TrainedModel::train(&best_params, &data.train, washout, seeds.reservoir))?;
    timings.push(("retrain", clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let e = &cfg.evaluation;
    let dim = cfg.system.dim();
    let rc_spectrum = stage("rc-invariants", model.spectrum(dim.min(size), e.rc_le_steps, e.rc_le_steps / 10))?;
    let comparison = stage("rc-invariants", compare_invariants(&rc_spectrum, &data.truth_spectrum))?;
    timings.push(("rc-invariants", clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let vpt = stage(
        "evaluate",
        vpt_distribution(&model, &data.test, &data.climate_normalized, &e.vpt(), data.lambda1()),
    )?;
    let attractor = stage("free-run", attractor_check(&model, data, e.free_run_steps))?;
    timings.push(("evaluate", clock.elapsed().as_secs_f64()));

    Ok(RunReport {
        variant,
        init,
        seeds,
        best_params,
        best_loss: search.best_loss,
        best_evaluation,
        history: search.history,
        model,
        rc_spectrum,
        comparison,
        vpt,
        attractor,
        timings,
    })
}

/// Report of a single experiment.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub truth_spectrum: LyapunovSpectrum,
    pub truth_ky: f64,
    pub t_f: usize,
    pub epsilon2: f64,
    pub run: RunReport,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    version: &'a str,
    config_hash: &'a str,
    variant: String,
    init: usize,
    seeds: RunSeeds,
    best_params: ReservoirParams,
    best_loss: f64,
    invariant_term: f64,
    forecast_term: f64,
    diverged_validation_forecasts: usize,
    loss_t_f: usize,
    loss_epsilon2: f64,
    truth_lambda1: f64,
    truth_ky: f64,
    rc_lambda1: f64,
    rc_ky: f64,
    lambda1_relative_error: f64,
    ky_abs_error: f64,
    vpt_mean: f64,
    vpt_median: f64,
    vpt_n: usize,
    vpt_censored: usize,
    vpt_epsilon: f64,
    attractor: &'a AttractorCheck,
    input_normalization: &'a str,
}

fn run_summary(run: &RunReport, data: &PreparedData) -> Result<String> {
    let s = RunSummary {
        version: VERSION,
        config_hash: &data.config_hash,
        variant: run.variant.to_string(),
        init: run.init,
        seeds: run.seeds,
        best_params: run.best_params,
        best_loss: run.best_loss,
        invariant_term: run.best_evaluation.terms.invariant,
        forecast_term: run.best_evaluation.terms.forecast,
        diverged_validation_forecasts: run.best_evaluation.diverged_forecasts,
        loss_t_f: data.loss.t_f,
        loss_epsilon2: data.loss.epsilon2,
        truth_lambda1: data.lambda1(),
        truth_ky: data.truth_ky,
        rc_lambda1: run.comparison.lambda1_model,
        rc_ky: run.comparison.ky_model,
        lambda1_relative_error: run.comparison.lambda1_relative_error,
        ky_abs_error: run.comparison.ky_abs_error,
        vpt_mean: run.vpt.mean,
        vpt_median: run.vpt.median,
        vpt_n: run.vpt.vpt_values.len(),
        vpt_censored: run.vpt.n_censored(),
        vpt_epsilon: run.vpt.epsilon,
        attractor: &run.attractor,
        input_normalization: "per-component zero mean, unit variance over the training split",
    };
    toml::to_string(&s).map_err(|e| Error::Config(e.to_string()))
}

fn persist_shared(dir: &Path, cfg: &ExperimentConfig, data: &PreparedData) -> Result<()> {
    ensure_dir(dir)?;
    let meta = Metadata::new(Some(&data.config_hash));
    write_text(&dir.join("config.toml"), &cfg.to_toml_string()?, &meta)?;
    write_spectrum_csv(&dir.join("truth_spectrum.csv"), &data.truth_spectrum, &meta)
}

fn persist_run(dir: &Path, run: &RunReport, data: &PreparedData) -> Result<()> {
    ensure_dir(dir)?;
    let meta = Metadata::new(Some(&data.config_hash))
        .with("variant", run.variant)
        .with("init", run.init);
    write_text(&dir.join("report.toml"), &run_summary(run, data)?, &meta)?;
    write_history_csv(&dir.join("search_history.csv"), &run.history, &meta)?;
    write_spectrum_csv(&dir.join("rc_spectrum.csv"), &run.rc_spectrum, &meta)?;
    write_vpt_csv(&dir.join("vpt.csv"), &run.vpt, &meta)?;
    let info = ModelInfo {
        version: VERSION.to_string(),
        config_hash: Some(data.config_hash.clone()),
        params: run.best_params,
        seed: run.model.reservoir.seed(),
        input_dim: run.model.reservoir.input_dim(),
        dt: run.model.dt,
        normalizer: data.normalizer.clone(),
        climate: data.climate_normalized.clone(),
        lambda1: data.lambda1(),
    };
    save_model(&dir.join("model"), &run.model, &info)?;
    let timings: String = std::iter::once("stage,seconds\n".to_string())
        .chain(run.timings.iter().map(|(s, t)| format!("{s},{t:.3}\n")))
        .collect();
    std::fs::write(dir.join("timings.csv"), timings).map_err(|e| Error::io(dir.join("timings.csv"), e))
}

fn with_failure_marker<T>(dir: &Path, r: Result<T>) -> Result<T> {
    if let Err(e) = &r {
        let _ = std::fs::create_dir_all(dir);
        let _ = std::fs::write(dir.join(FAILURE_MARKER), format!("{e}\n"));
    }
    r
}

/// Full pipeline for `cfg.invariants` with reservoir initialization 0,
/// persisted under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.output_dir.clone();
    with_failure_marker(&dir, (|| {
        let _ = std::fs::remove_file(dir.join(FAILURE_MARKER));
        let data = prepare_data(cfg)?;
        stage("persist", persist_shared(&dir, cfg, &data))?;
        let run = run_variant(cfg, &data, cfg.invariants, 0)?;
        stage("persist", persist_run(&dir, &run, &data))?;
        Ok(ExperimentReport {
            config: cfg.clone(),
            config_hash: data.config_hash.clone(),
            truth_spectrum: data.truth_spectrum.clone(),
            truth_ky: data.truth_ky,
            t_f: data.loss.t_f,
            epsilon2: data.loss.epsilon2,
            run,
        })
    })())
}

/// One row of the comparison table; `init` is `None` on summary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variant: InvariantsProvided,
    pub init: Option<usize>,
    /// Per-init rows: the run's mean VPT. Summary rows: mean of per-init means.
    pub mean_vpt: f64,
    /// Per-init rows: the run's median. Summary rows: median of per-init means.
    pub median_vpt: f64,
    /// Statistics of all per-IC VPTs pooled over inits (equal to the run's
    /// own on per-init rows).
    pub pooled_mean_vpt: f64,
    pub pooled_median_vpt: f64,
    pub rc_lambda1: f64,
    pub lambda1_relative_error: f64,
    pub rc_ky: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub truth_spectrum: LyapunovSpectrum,
    pub runs: Vec<RunReport>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn summary(&self, variant: InvariantsProvided) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == variant && r.init.is_none())
    }

    pub fn runs_for(&self, variant: InvariantsProvided) -> impl Iterator<Item = &RunReport> {
        self.runs.iter().filter(move |r| r.variant == variant)
    }
}

fn variant_slug(v: InvariantsProvided) -> String {
    v.to_string().replace(':', "").replace('+', "_")
}

fn comparison_rows(runs: &[RunReport], variants: &[InvariantsProvided]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for &v in variants {
        let mine: Vec<&RunReport> = runs.iter().filter(|r| r.variant == v).collect();
        for r in &mine {
            rows.push(ComparisonRow {
                variant: v,
                init: Some(r.init),
                mean_vpt: r.vpt.mean,
                median_vpt: r.vpt.median,
                pooled_mean_vpt: r.vpt.mean,
                pooled_median_vpt: r.vpt.median,
                rc_lambda1: r.comparison.lambda1_model,
                lambda1_relative_error: r.comparison.lambda1_relative_error,
                rc_ky: r.comparison.ky_model,
                best_loss: r.best_loss,
            });
        }
        let means: Vec<f64> = mine.iter().map(|r| r.vpt.mean).collect();
        let pooled: Vec<f64> = mine.iter().flat_map(|r| r.vpt.vpt_values.iter().copied()).collect();
        let avg = |f: fn(&RunReport) -> f64| mean(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
        rows.push(ComparisonRow {
            variant: v,
            init: None,
            mean_vpt: mean(&means),
            median_vpt: median(&means),
            pooled_mean_vpt: mean(&pooled),
            pooled_median_vpt: median(&pooled),
            rc_lambda1: avg(|r| r.comparison.lambda1_model),
            lambda1_relative_error: avg(|r| r.comparison.lambda1_relative_error),
            rc_ky: avg(|r| r.comparison.ky_model),
            best_loss: avg(|r| r.best_loss),
        });
    }
    rows
}

fn write_comparison_csv(path: &Path, rows: &[ComparisonRow], meta: &Metadata) -> Result<()> {
    let mut text = String::from(
        "variant,init,mean_vpt,median_vpt,pooled_mean_vpt,pooled_median_vpt,rc_lambda1,lambda1_relative_error,rc_ky,best_loss\n",
    );
    for r in rows {
        let init = r.init.map_or("summary".to_string(), |i| i.to_string());
        let nums = [
            r.mean_vpt,
            r.median_vpt,
            r.pooled_mean_vpt,
            r.pooled_median_vpt,
            r.rc_lambda1,
            r.lambda1_relative_error,
            r.rc_ky,
            r.best_loss,
        ]
        .map(fmt_f64)
        .join(",");
        text.push_str(&format!("{},{init},{nums}\n", r.variant));
    }
    write_text(path, &text, meta)
}

/// Runs every variant for `n_inits` paired reservoir initializations and
/// tabulates per-init and summary VPT statistics.
pub fn run_comparison(
    cfg: &ExperimentConfig,
    variants: &[InvariantsProvided],
    n_inits: usize,
) -> Result<ComparisonReport> {
    let dir = cfg.output_dir.clone();
    with_failure_marker(&dir, (|| {
        if variants.is_empty() || n_inits == 0 {
            return Err(Error::invalid("comparison needs at least one variant and one init"));
        }
        let _ = std::fs::remove_file(dir.join(FAILURE_MARKER));
        let data = prepare_data(cfg)?;
        stage("persist", persist_shared(&dir, cfg, &data))?;
        let jobs: Vec<(InvariantsProvided, usize)> = variants
            .iter()
            .flat_map(|&v| (0..n_inits).map(move |i| (v, i)))
            .collect();
        let runs = jobs
            .par_iter()
            .map(|&(v, i)| {
                let run = run_variant(cfg, &data, v, i)?;
                let run_dir = dir.join("runs").join(format!("{}_init{i}", variant_slug(v)));
                stage("persist", persist_run(&run_dir, &run, &data))?;
                Ok(run)
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = comparison_rows(&runs, variants);
        let meta = Metadata::new(Some(&data.config_hash)).with("n_inits", n_inits);
        stage("persist", write_comparison_csv(&dir.join("comparison.csv"), &rows, &meta))?;
        Ok(ComparisonReport {
            config_hash: data.config_hash.clone(),
            truth_spectrum: data.truth_spectrum.clone(),
            runs,
            rows,
        })
    })())
}

/// Writes a trajectory for `cfg.system` to `path`.
pub fn generate_to_csv(cfg: &ExperimentConfig, path: &Path) -> Result<TimeSeries> {
    cfg.validate()?;
    let seed = derive_seed(cfg.master_seed, &["data"]);
    let integration = IntegrationConfig {
        dt: cfg.data.dt,
        n_steps: cfg.data.n_steps,
        n_transient: cfg.data.n_transient,
        seed,
    };
    let series = stage(
        "generate",
        generate_trajectory(&cfg.system, &cfg.system.random_initial_condition(seed), &integration),
    )?;
    let meta = Metadata::new(Some(&config_hash(&cfg.to_toml_string()?)));
    stage("persist", write_series_csv(path, &series, &meta))?;
    Ok(series)
}
