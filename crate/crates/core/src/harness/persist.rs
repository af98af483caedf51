//! CSV and TOML artifacts. Every file starts with `#` metadata lines naming
//! the crate version and, when known, the config hash.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Normalizer, TimeSeries};
use crate::error::{Error, Result};
use crate::evaluation::{ClimateStats, VptReport};
use crate::invariants::LyapunovSpectrum;
use crate::reservoir::{build_reservoir, ReadoutMatrix, ReservoirParams};
use crate::training::{Evaluation, TrainedModel};

use super::config::SEARCH_NAMES;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header comment lines written at the top of every artifact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub config_hash: Option<String>,
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(config_hash: Option<&str>) -> Self {
        Self {
            config_hash: config_hash.map(str::to_string),
            entries: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![format!("# version {VERSION}")];
        if let Some(h) = &self.config_hash {
            out.push(format!("# config_hash {h}"));
        }
        out.extend(self.entries.iter().map(|(k, v)| format!("# {k} {v}")));
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Full-precision rendering (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path, meta: &Metadata) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = create(path)?;
    for line in meta.lines() {
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the leading `#` lines of a file back into [`Metadata`].
pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut meta = Metadata::default();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(rest) = line.strip_prefix('#') else { break };
        let (key, value) = rest.trim().split_once(' ').unwrap_or((rest.trim(), ""));
        match key {
            "version" => {}
            "config_hash" => meta.config_hash = Some(value.to_string()),
            _ => meta.entries.push((key.to_string(), value.to_string())),
        }
    }
    Ok(meta)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

fn parse_f64(field: &str, path: &Path) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        context: path.display().to_string(),
        message: format!("`{field}` is not a number"),
    })
}

/// Writes `t,u1,...,uD` with `t = step * dt`.
pub fn write_series_csv(path: &Path, series: &TimeSeries, meta: &Metadata) -> Result<()> {
    let meta = meta.clone().with("dt", fmt_f64(series.dt()));
    let mut w = csv_writer(path, &meta)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=series.dim()).map(|k| format!("u{k}")));
    w.write_record(&header)?;
    for (t, row) in series.rows().enumerate() {
        let mut rec = vec![fmt_f64(t as f64 * series.dt())];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let meta = read_metadata(path)?;
    let mut r = csv_reader(path)?;
    let dim = r.headers()?.len().saturating_sub(1);
    if dim == 0 {
        return Err(Error::Parse {
            context: path.display().to_string(),
            message: "expected columns t,u1,...,uD".into(),
        });
    }
    let mut times = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        times.push(parse_f64(&rec[0], path)?);
        for field in rec.iter().skip(1) {
            data.push(parse_f64(field, path)?);
        }
    }
    let dt = match meta.get("dt") {
        Some(v) => parse_f64(v, path)?,
        None if times.len() >= 2 => times[1] - times[0],
        None => {
            return Err(Error::Parse {
                context: path.display().to_string(),
                message: "cannot infer dt from fewer than two rows without a `# dt` line".into(),
            })
        }
    };
    TimeSeries::new(dt, dim, data)
}

/// Writes `index,lambda` with `n_steps` and `dt` metadata.
pub fn write_spectrum_csv(path: &Path, spectrum: &LyapunovSpectrum, meta: &Metadata) -> Result<()> {
    let meta = meta
        .clone()
        .with("n_steps", spectrum.n_steps_used)
        .with("dt", fmt_f64(spectrum.dt));
    let mut w = csv_writer(path, &meta)?;
    w.write_record(["index", "lambda"])?;
    for (i, l) in spectrum.exponents().iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*l)])?;
    }
    finish(w, path)
}

pub fn read_spectrum_csv(path: &Path) -> Result<LyapunovSpectrum> {
    let meta = read_metadata(path)?;
    let mut r = csv_reader(path)?;
    let mut exps = Vec::new();
    for rec in r.records() {
        exps.push(parse_f64(&rec?[1], path)?);
    }
    let n_steps = meta.get("n_steps").and_then(|v| v.parse().ok()).unwrap_or(0);
    let dt = meta.get("dt").map(|v| parse_f64(v, path)).transpose()?.unwrap_or(1.0);
    LyapunovSpectrum::new(exps, n_steps, dt)
}

/// Search history; `beta` is stored as `log10_beta`.
pub fn write_history_csv(path: &Path, history: &[Evaluation], meta: &Metadata) -> Result<()> {
    let mut w = csv_writer(path, meta)?;
    let mut header = vec!["generation", "candidate_index", "loss"];
    header.extend(SEARCH_NAMES[..5].iter());
    header.push("log10_beta");
    w.write_record(&header)?;
    for e in history {
        let mut rec = vec![
            e.generation.to_string(),
            e.candidate_index.to_string(),
            fmt_f64(e.loss),
        ];
        rec.extend(e.point[..5].iter().map(|&v| fmt_f64(v)));
        rec.push(fmt_f64(e.point[5].log10()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// Per-IC VPTs followed by a `# summary` line.
pub fn write_vpt_csv(path: &Path, report: &VptReport, meta: &Metadata) -> Result<()> {
    let meta = meta
        .clone()
        .with("epsilon", fmt_f64(report.epsilon))
        .with("lambda1", fmt_f64(report.lambda1));
    let mut w = csv_writer(path, &meta)?;
    w.write_record(["ic_index", "vpt_lyapunov_times", "censored"])?;
    for (i, (v, c)) in report.vpt_values.iter().zip(&report.censored).enumerate() {
        w.write_record([i.to_string(), fmt_f64(*v), c.to_string()])?;
    }
    let mut file = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    writeln!(
        file,
        "# summary n={} mean={} median={} n_censored={}",
        report.vpt_values.len(),
        fmt_f64(report.mean),
        fmt_f64(report.median),
        report.n_censored()
    )
    .and_then(|_| file.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn read_vpt_csv(path: &Path) -> Result<VptReport> {
    let meta = read_metadata(path)?;
    let mut r = csv_reader(path)?;
    let mut vpts = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        vpts.push(crate::evaluation::Vpt {
            lyapunov_times: parse_f64(&rec[1], path)?,
            censored: rec[2].trim() == "true",
        });
    }
    let get = |k: &str| -> Result<f64> {
        meta.get(k)
            .map(|v| parse_f64(v, path))
            .transpose()?
            .ok_or_else(|| Error::Parse {
                context: path.display().to_string(),
                message: format!("missing `# {k}` line"),
            })
    };
    VptReport::from_values(&vpts, get("epsilon")?, get("lambda1")?)
}

/// Dense matrix with columns `c0..c{n-1}`.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, meta: &Metadata) -> Result<()> {
    let mut w = csv_writer(path, meta)?;
    w.write_record((0..m.ncols()).map(|j| format!("c{j}")))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    finish(w, path)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv_reader(path)?;
    let ncols = r.headers()?.len();
    let mut data = Vec::new();
    let mut nrows = 0;
    for rec in r.records() {
        let rec = rec?;
        for f in rec.iter() {
            data.push(parse_f64(f, path)?);
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

/// Everything besides `W_out` needed to rebuild and use a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInfo {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub params: ReservoirParams,
    /// Seed the reservoir was actually built from.
    pub seed: u64,
    pub input_dim: usize,
    pub dt: f64,
    /// Map from physical units to the model's units.
    pub normalizer: Normalizer,
    /// Climate statistics in the model's units.
    pub climate: ClimateStats,
    /// Largest exponent of the true system, for VPT scaling.
    pub lambda1: f64,
}

const MODEL_FILE: &str = "model.toml";
const READOUT_FILE: &str = "w_out.csv";
const STATE_FILE: &str = "r_last.csv";

pub fn save_model(dir: &Path, model: &TrainedModel, info: &ModelInfo) -> Result<()> {
    let meta = Metadata::new(info.config_hash.as_deref());
    let text = toml::to_string(info).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join(MODEL_FILE);
    let mut f = create(&path)?;
    let header: String = meta.lines().iter().map(|l| format!("{l}\n")).collect();
    f.write_all(header.as_bytes())
        .and_then(|_| f.write_all(text.as_bytes()))
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(&path, e))?;
    write_matrix_csv(&dir.join(READOUT_FILE), &model.readout.weights, &meta)?;
    let state = DMatrix::from_row_slice(1, model.last_state.len(), &model.last_state);
    write_matrix_csv(&dir.join(STATE_FILE), &state, &meta)
}

pub fn load_model(dir: &Path) -> Result<(TrainedModel, ModelInfo)> {
    let path = dir.join(MODEL_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let info: ModelInfo = toml::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let reservoir = build_reservoir(&info.params, info.input_dim, info.seed)?;
    let readout = ReadoutMatrix::new(read_matrix_csv(&dir.join(READOUT_FILE))?)?;
    if readout.weights.shape() != (info.input_dim, info.params.size) {
        return Err(Error::Parse {
            context: dir.join(READOUT_FILE).display().to_string(),
            message: format!(
                "readout is {:?}, expected ({}, {})",
                readout.weights.shape(),
                info.input_dim,
                info.params.size
            ),
        });
    }
    let state = read_matrix_csv(&dir.join(STATE_FILE))?;
    let model = TrainedModel {
        reservoir,
        readout,
        last_state: state.iter().copied().collect(),
        dt: info.dt,
    };
    Ok((model, info))
}

/// Writes `contents` after the metadata header.
pub fn write_text(path: &Path, contents: &str, meta: &Metadata) -> Result<()> {
    let mut f = create(path)?;
    for line in meta.lines() {
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.write_all(contents.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}
