//! Experiment configuration: strict TOML with dotted section keys.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::evaluation::VptConfig;
use crate::reservoir::ReservoirParams;
use crate::training::{CmaEsConfig, Scale, SearchDimension, SearchSpace};

/// Which invariants of the true system the loss is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InvariantsProvided {
    None,
    Les(usize),
    Dimension,
    Both(usize),
}

impl InvariantsProvided {
    pub fn n_les(&self) -> usize {
        match *self {
            Self::Les(k) | Self::Both(k) => k,
            _ => 0,
        }
    }

    pub fn dimension(&self) -> bool {
        matches!(self, Self::Dimension | Self::Both(_))
    }
}

impl fmt::Display for InvariantsProvided {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Les(k) => write!(f, "les:{k}"),
            Self::Dimension => write!(f, "dimension"),
            Self::Both(k) => write!(f, "les:{k}+dimension"),
        }
    }
}

impl FromStr for InvariantsProvided {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "invalid invariants `{s}`; expected none, les:<k>, dimension or les:<k>+dimension"
            ))
        };
        let parse_k = |k: &str| -> Result<usize> {
            match k.parse::<usize>() {
                Ok(k) if k > 0 => Ok(k),
                _ => Err(bad()),
            }
        };
        match s.trim() {
            "none" | "les:0" => Ok(Self::None),
            "dimension" => Ok(Self::Dimension),
            other => {
                let rest = other.strip_prefix("les:").ok_or_else(bad)?;
                match rest.split_once('+') {
                    Some((k, "dimension")) => Ok(Self::Both(parse_k(k)?)),
                    Some(_) => Err(bad()),
                    None => Ok(Self::Les(parse_k(rest)?)),
                }
            }
        }
    }
}

impl TryFrom<String> for InvariantsProvided {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InvariantsProvided> for String {
    fn from(v: InvariantsProvided) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dt: f64,
    /// Recorded steps, split into train, validation and test.
    pub n_steps: usize,
    pub n_transient: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    /// Open-loop steps discarded before recording training states.
    pub washout: usize,
    /// Synchronization length of each validation forecast.
    pub sync_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Bounds {
    fn linear(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            scale: Scale::Linear,
        }
    }

    fn log10(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            scale: Scale::Log10,
        }
    }
}

/// Box over the searched hyperparameters, in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SearchConfig {
    pub rho_A: Bounds,
    pub rho_SR: Bounds,
    pub sigma: Bounds,
    pub sigma_b: Bounds,
    pub leak_rate: Bounds,
    pub beta: Bounds,
}

/// Coordinate order used by [`SearchConfig::space`] and the history CSV.
pub const SEARCH_NAMES: [&str; 6] = ["rho_A", "rho_SR", "sigma", "sigma_b", "leak_rate", "beta"];

impl SearchConfig {
    fn entries(&self) -> [(&'static str, Bounds); 6] {
        [
            ("rho_A", self.rho_A),
            ("rho_SR", self.rho_SR),
            ("sigma", self.sigma),
            ("sigma_b", self.sigma_b),
            ("leak_rate", self.leak_rate),
            ("beta", self.beta),
        ]
    }

    pub fn space(&self) -> Result<SearchSpace> {
        SearchSpace::new(
            self.entries()
                .iter()
                .map(|(n, b)| SearchDimension::new(n, b.lower, b.upper, b.scale))
                .collect(),
        )
    }

    /// Reservoir parameters at a search point ordered as [`SEARCH_NAMES`].
    pub fn params_at(point: &[f64], size: usize) -> ReservoirParams {
        ReservoirParams {
            size,
            density: point[0],
            spectral_radius: point[1],
            input_scale: point[2],
            bias: point[3],
            leak_rate: point[4],
            beta: point[5],
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, b) in self.entries() {
            let field = format!("search.{name}");
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(Error::Config(format!(
                    "{field}: need finite bounds with lower < upper, got [{}, {}]",
                    b.lower, b.upper
                )));
            }
            if b.scale == Scale::Log10 && b.lower <= 0.0 {
                return Err(Error::Config(format!("{field}: log10 scale needs lower > 0")));
            }
        }
        let positive = [("rho_A", self.rho_A), ("rho_SR", self.rho_SR), ("sigma", self.sigma)];
        for (name, b) in positive {
            if b.lower <= 0.0 {
                return Err(Error::Config(format!("search.{name}: lower bound must be > 0")));
            }
        }
        if self.rho_A.upper > 1.0 {
            return Err(Error::Config("search.rho_A: upper bound must be <= 1".into()));
        }
        if self.leak_rate.lower <= 0.0 || self.leak_rate.upper > 1.0 {
            return Err(Error::Config("search.leak_rate: bounds must lie in (0, 1]".into()));
        }
        if self.beta.lower < 0.0 {
            return Err(Error::Config("search.beta: lower bound must be >= 0".into()));
        }
        for (name, b) in [("sigma", self.sigma), ("beta", self.beta)] {
            if b.scale != Scale::Log10 {
                return Err(Error::Config(format!("search.{name}: must use scale = \"log10\"")));
            }
        }
        Ok(())
    }
}

/// Loss weights; absent values are derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub epsilon1: f64,
    /// Defaults to the reciprocal of the number of scored values, which
    /// makes the forecast term a mean squared error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon2: Option<f64>,
    pub t_i: usize,
    /// Defaults to five Lyapunov times of the true system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_f: Option<usize>,
    pub m: usize,
    pub rc_le_steps: usize,
    pub rc_le_transient: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_size: Option<usize>,
    pub max_generations: usize,
    pub initial_step_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_loss: Option<f64>,
}

impl CmaSection {
    pub fn to_config(&self, seed: u64) -> CmaEsConfig {
        CmaEsConfig {
            population_size: self.population_size,
            max_generations: self.max_generations,
            initial_step_size: self.initial_step_size,
            seed,
            target_loss: self.target_loss,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub n_ics: usize,
    pub sync_len: usize,
    pub horizon: usize,
    pub epsilon: f64,
    /// Length of the dedicated reference run for climate statistics.
    pub climate_steps: usize,
    /// Length of the closed-loop run used to check the attractor.
    pub free_run_steps: usize,
    /// Map steps for the final model's spectrum.
    pub rc_le_steps: usize,
    /// Steps for the true system's spectrum.
    pub truth_le_steps: usize,
}

impl EvaluationSection {
    pub fn vpt(&self) -> VptConfig {
        VptConfig {
            n_ics: self.n_ics,
            sync_len: self.sync_len,
            horizon: self.horizon,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSection {
    pub variants: Vec<InvariantsProvided>,
    pub n_inits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub invariants: InvariantsProvided,
    pub system: SystemSpec,
    pub data: DataConfig,
    pub reservoir: ReservoirSection,
    pub search: SearchConfig,
    pub loss: LossSection,
    pub cma: CmaSection,
    pub evaluation: EvaluationSection,
    pub comparison: ComparisonSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSection {
    pub size: usize,
}

impl Default for ExperimentConfig {
    /// Limited-data Lorenz 96 protocol at desk scale.
    fn default() -> Self {
        Self {
            master_seed: 2024,
            output_dir: PathBuf::from("runs/l96"),
            invariants: InvariantsProvided::Les(1),
            system: SystemSpec::Lorenz96 {
                dimension: 10,
                forcing: 8.0,
            },
            data: DataConfig {
                dt: 0.01,
                n_steps: 250_000,
                n_transient: 2_000,
                train_frac: 0.08,
                val_frac: 0.02,
                washout: 200,
                sync_len: 200,
            },
            reservoir: ReservoirSection { size: 400 },
            search: SearchConfig {
                rho_A: Bounds::linear(0.005, 0.2),
                rho_SR: Bounds::linear(0.05, 1.5),
                sigma: Bounds::log10(0.003, 3.0),
                sigma_b: Bounds::linear(-1.0, 1.0),
                leak_rate: Bounds::linear(0.05, 1.0),
                beta: Bounds::log10(1e-10, 1e-2),
            },
            loss: LossSection {
                epsilon1: 1.0,
                epsilon2: None,
                t_i: 0,
                t_f: None,
                m: 7,
                rc_le_steps: 5_000,
                rc_le_transient: 500,
            },
            cma: CmaSection {
                population_size: None,
                max_generations: 15,
                initial_step_size: 0.3,
                target_loss: None,
            },
            evaluation: EvaluationSection {
                n_ics: 200,
                sync_len: 200,
                horizon: 900,
                epsilon: 0.3,
                climate_steps: 100_000,
                free_run_steps: 10_000,
                rc_le_steps: 20_000,
                truth_le_steps: 300_000,
            },
            comparison: ComparisonSection {
                variants: vec![InvariantsProvided::None, InvariantsProvided::Les(1)],
                n_inits: 10,
            },
        }
    }
}

fn check(cond: bool, field: &str, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: {msg}")))
    }
}

impl ExperimentConfig {
    /// Range checks beyond what the types enforce.
    pub fn validate(&self) -> Result<()> {
        self.system
            .validate()
            .map_err(|e| Error::Config(format!("system: {e}")))?;
        let d = &self.data;
        check(d.dt > 0.0 && d.dt.is_finite(), "data.dt", "must be positive")?;
        check(d.n_steps > 0, "data.n_steps", "must be positive")?;
        check(d.train_frac > 0.0 && d.train_frac < 1.0, "data.train_frac", "must be in (0, 1)")?;
        check(d.val_frac > 0.0 && d.val_frac < 1.0, "data.val_frac", "must be in (0, 1)")?;
        check(
            d.train_frac + d.val_frac < 1.0,
            "data.val_frac",
            "train_frac + val_frac must leave room for test data",
        )?;
        check(d.sync_len > 0, "data.sync_len", "must be positive")?;
        let n_train = (d.n_steps as f64 * d.train_frac).floor() as usize;
        check(d.washout < n_train, "data.washout", "must be shorter than the training split")?;
        check(self.reservoir.size >= 10, "reservoir.size", "must be at least 10")?;
        self.search.validate()?;

        let l = &self.loss;
        check(l.epsilon1 >= 0.0 && l.epsilon1.is_finite(), "loss.epsilon1", "must be >= 0")?;
        if let Some(e2) = l.epsilon2 {
            check(e2 >= 0.0 && e2.is_finite(), "loss.epsilon2", "must be >= 0")?;
            check(l.epsilon1 + e2 > 0.0, "loss.epsilon2", "epsilon1 + epsilon2 must be > 0")?;
        }
        if let Some(tf) = l.t_f {
            check(tf > l.t_i, "loss.t_f", "must exceed loss.t_i")?;
        }
        check(l.m >= 1, "loss.m", "must be at least 1")?;
        check(l.rc_le_steps > 0, "loss.rc_le_steps", "must be positive")?;

        let c = &self.cma;
        check(c.max_generations > 0, "cma.max_generations", "must be positive")?;
        check(
            c.initial_step_size > 0.0 && c.initial_step_size.is_finite(),
            "cma.initial_step_size",
            "must be positive",
        )?;
        if let Some(p) = c.population_size {
            check(p >= 4, "cma.population_size", "must be at least 4")?;
        }

        let e = &self.evaluation;
        check(e.n_ics > 0, "evaluation.n_ics", "must be positive")?;
        check(e.sync_len > 0, "evaluation.sync_len", "must be positive")?;
        check(e.horizon > 0, "evaluation.horizon", "must be positive")?;
        check(e.epsilon > 0.0, "evaluation.epsilon", "must be positive")?;
        check(e.climate_steps >= 2, "evaluation.climate_steps", "must be at least 2")?;
        check(e.rc_le_steps > 0, "evaluation.rc_le_steps", "must be positive")?;
        check(e.truth_le_steps > 0, "evaluation.truth_le_steps", "must be positive")?;
        let n_test = d.n_steps - n_train - (d.n_steps as f64 * d.val_frac).floor() as usize;
        check(
            e.n_ics * e.vpt().window() <= n_test,
            "evaluation.n_ics",
            &format!(
                "{} windows of {} steps exceed the {n_test}-step test split",
                e.n_ics,
                e.vpt().window()
            ),
        )?;
        check(!self.comparison.variants.is_empty(), "comparison.variants", "must not be empty")?;
        check(self.comparison.n_inits >= 1, "comparison.n_inits", "must be at least 1")?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            context: "config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads, parses and range-checks a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            context: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_toml_string()?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_grammar() {
        for (s, v) in [
            ("none", InvariantsProvided::None),
            ("les:3", InvariantsProvided::Les(3)),
            ("dimension", InvariantsProvided::Dimension),
            ("les:2+dimension", InvariantsProvided::Both(2)),
        ] {
            assert_eq!(s.parse::<InvariantsProvided>().unwrap(), v);
            assert_eq!(v.to_string(), s);
        }
        for bad in ["les", "les:x", "les:-1", "dim", "les:1+les"] {
            assert!(bad.parse::<InvariantsProvided>().is_err(), "{bad}");
        }
    }

    #[test]
    fn default_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn range_violation_names_the_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.search.sigma.scale = Scale::Linear;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("search.sigma"), "{err}");

        let mut cfg = ExperimentConfig::default();
        cfg.evaluation.n_ics = 10_000;
        assert!(cfg.validate().unwrap_err().to_string().contains("evaluation.n_ics"));
    }
}
