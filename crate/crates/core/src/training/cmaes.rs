//! (μ/μ_w, λ)-CMA-ES over a box of hyperparameters.
//!
//! Every dimension is mapped affinely (after an optional log10) onto `[0, 1]`
//! and the search runs in that unit box. Samples outside the box are clipped
//! before evaluation and the clipped points drive the update.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

/// One searched coordinate. Bounds are given in natural units even for
/// log-scaled dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchDimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl SearchDimension {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            scale,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::invalid(format!(
                "dimension `{}` needs finite bounds with lower < upper, got [{}, {}]",
                self.name, self.lower, self.upper
            )));
        }
        if self.scale == Scale::Log10 && self.lower <= 0.0 {
            return Err(Error::invalid(format!(
                "log-scaled dimension `{}` needs a positive lower bound",
                self.name
            )));
        }
        Ok(())
    }

    fn warp(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    /// Natural value of unit-box coordinate `x`.
    pub fn decode(&self, x: f64) -> f64 {
        let (lo, hi) = (self.warp(self.lower), self.warp(self.upper));
        let w = lo + x.clamp(0.0, 1.0) * (hi - lo);
        let v = match self.scale {
            Scale::Linear => w,
            Scale::Log10 => 10f64.powf(w),
        };
        v.clamp(self.lower, self.upper)
    }

    /// Unit-box coordinate of natural value `v`.
    pub fn encode(&self, v: f64) -> f64 {
        let (lo, hi) = (self.warp(self.lower), self.warp(self.upper));
        ((self.warp(v) - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dimensions: Vec<SearchDimension>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<SearchDimension>) -> Result<Self> {
        let space = Self { dimensions };
        space.validate()?;
        Ok(space)
    }

    /// Every coordinate on `[lower, upper]`, linear scale.
    pub fn uniform_box(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| SearchDimension::new(&format!("x{i}"), lower, upper, Scale::Linear))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::invalid("search space has no dimensions"));
        }
        self.dimensions.iter().try_for_each(SearchDimension::validate)
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn decode(&self, unit: &[f64]) -> Vec<f64> {
        self.dimensions.iter().zip(unit).map(|(d, &x)| d.decode(x)).collect()
    }

    pub fn encode(&self, point: &[f64]) -> Vec<f64> {
        self.dimensions.iter().zip(point).map(|(d, &v)| d.encode(v)).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.len()
            && self
                .dimensions
                .iter()
                .zip(point)
                .all(|(d, &v)| v >= d.lower && v <= d.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaEsConfig {
    /// Offspring per generation; `None` uses `4 + floor(3 ln n)`.
    #[serde(default)]
    pub population_size: Option<usize>,
    pub max_generations: usize,
    /// Initial step size as a fraction of the box width.
    pub initial_step_size: f64,
    pub seed: u64,
    /// Stop as soon as a loss at or below this value is seen.
    #[serde(default)]
    pub target_loss: Option<f64>,
    /// Evaluate each generation's candidates on the rayon pool.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for CmaEsConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            max_generations: 100,
            initial_step_size: 0.3,
            seed: 0,
            target_loss: None,
            parallel: true,
        }
    }
}

impl CmaEsConfig {
    pub fn population_for(&self, n: usize) -> usize {
        self.population_size
            .unwrap_or(4 + (3.0 * (n as f64).ln()).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size.is_some_and(|p| p < 4) {
            return Err(Error::invalid("population size must be at least 4"));
        }
        if !(self.initial_step_size > 0.0 && self.initial_step_size.is_finite()) {
            return Err(Error::invalid("initial step size must be positive"));
        }
        if self.max_generations == 0 {
            return Err(Error::invalid("max_generations must be positive"));
        }
        Ok(())
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub generation: usize,
    pub candidate_index: usize,
    /// Natural-unit coordinates.
    pub point: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct CmaEsResult {
    pub best_point: Vec<f64>,
    pub best_loss: f64,
    /// Every evaluation in generation and candidate order.
    pub history: Vec<Evaluation>,
    /// Best-ever point after each generation.
    pub best_per_generation: Vec<Vec<f64>>,
    pub generations: usize,
}

impl CmaEsResult {
    pub fn evaluations(&self) -> usize {
        self.history.len()
    }
}

/// Minimizes `objective` over `space`, starting from the box center or from
/// `initial` (natural units) when given.
///
/// Non-finite losses rank last. Parallel and serial evaluation give identical
/// results because candidates are drawn before evaluation and collected in
/// index order.
pub fn cma_es_minimize<F>(
    objective: F,
    space: &SearchSpace,
    cfg: &CmaEsConfig,
    initial: Option<&[f64]>,
) -> Result<CmaEsResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    space.validate()?;
    cfg.validate()?;
    let n = space.len();
    let nf = n as f64;
    let lambda = cfg.population_for(n);
    let mu = lambda / 2;

    let raw: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let raw_sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / raw_sum).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1)
        .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut mean = match initial {
        Some(p) if p.len() == n => DVector::from_vec(space.encode(p)),
        Some(p) => {
            return Err(Error::invalid(format!(
                "initial point has {} coordinates, space has {n}",
                p.len()
            )))
        }
        None => DVector::from_element(n, 0.5),
    };
    let mut sigma = cfg.initial_step_size;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut p_c = DVector::<f64>::zeros(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut history = Vec::new();
    let mut best_per_generation = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut generations = 0;

    for generation in 0..cfg.max_generations {
        generations = generation + 1;
        let samples: Vec<DVector<f64>> = (0..lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let y = &basis * z.component_mul(&scales);
                (&mean + y * sigma).map(|v| v.clamp(0.0, 1.0))
            })
            .collect();
        let points: Vec<Vec<f64>> = samples.iter().map(|x| space.decode(x.as_slice())).collect();
        let losses: Vec<f64> = if cfg.parallel {
            points.par_iter().map(|p| objective(p)).collect()
        } else {
            points.iter().map(|p| objective(p)).collect()
        };

        for (i, (p, &loss)) in points.iter().zip(&losses).enumerate() {
            history.push(Evaluation {
                generation,
                candidate_index: i,
                point: p.clone(),
                loss,
            });
            if loss.is_finite() && best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, p.clone()));
            }
        }
        if let Some((_, p)) = &best {
            best_per_generation.push(p.clone());
        }
        if let (Some(target), Some((b, _))) = (cfg.target_loss, &best) {
            if *b <= target {
                break;
            }
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| rank_key(losses[a]).total_cmp(&rank_key(losses[b])).then(a.cmp(&b)));

        let old_mean = mean.clone();
        mean = DVector::zeros(n);
        for (w, &i) in weights.iter().zip(&order) {
            mean += &samples[i] * *w;
        }
        let step = (&mean - &old_mean) / sigma;

        let inv_sqrt = &basis * DMatrix::from_diagonal(&scales.map(|d| 1.0 / d)) * basis.transpose();
        p_sigma = &p_sigma * (1.0 - c_sigma)
            + (&inv_sqrt * &step) * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
        let ps_norm = p_sigma.norm();
        let decay = 1.0 - (1.0 - c_sigma).powi(2 * (generation as i32 + 1));
        let h_sigma = ps_norm / decay.sqrt() / chi_n < 1.4 + 2.0 / (nf + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        p_c = &p_c * (1.0 - c_c) + &step * (h * (c_c * (2.0 - c_c) * mu_eff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &i) in weights.iter().zip(&order) {
            let y = (&samples[i] - &old_mean) / sigma;
            rank_mu += &y * y.transpose() * *w;
        }
        let delta_h = (1.0 - h) * c_c * (2.0 - c_c);
        cov = &cov * (1.0 - c_1 - c_mu + c_1 * delta_h)
            + (&p_c * p_c.transpose()) * c_1
            + rank_mu * c_mu;
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();

        let eig = SymmetricEigen::new(cov.clone());
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());

        let spread = sigma * scales.max();
        if !spread.is_finite() || spread < 1e-15 {
            break;
        }
    }

    let (best_loss, best_point) = best.ok_or_else(|| {
        Error::invalid("objective returned no finite value during the search")
    })?;
    Ok(CmaEsResult {
        best_point,
        best_loss,
        history,
        best_per_generation,
        generations,
    })
}

fn rank_key(loss: f64) -> f64 {
    if loss.is_nan() {
        f64::INFINITY
    } else {
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let d = SearchDimension::new("beta", 1e-8, 1e-2, Scale::Log10);
        assert!((d.decode(0.5) - 1e-5).abs() < 1e-18);
        assert!((d.encode(1e-5) - 0.5).abs() < 1e-12);
        assert_eq!(d.decode(-3.0), 1e-8);
        let l = SearchDimension::new("x", -2.0, 2.0, Scale::Linear);
        assert_eq!(l.decode(0.75), 1.0);
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        assert!(SearchSpace::new(vec![]).is_err());
        assert!(SearchSpace::new(vec![SearchDimension::new("a", 1.0, 1.0, Scale::Linear)]).is_err());
        assert!(SearchSpace::new(vec![SearchDimension::new("a", 0.0, 1.0, Scale::Log10)]).is_err());
    }

    #[test]
    fn default_population() {
        let c = CmaEsConfig::default();
        assert_eq!(c.population_for(6), 9);
        assert_eq!(c.population_for(10), 10);
        assert_eq!(c.population_for(2), 6);
    }

    #[test]
    fn shifted_quadratic() {
        let space = SearchSpace::uniform_box(3, -5.0, 5.0).unwrap();
        let cfg = CmaEsConfig {
            max_generations: 400,
            parallel: false,
            seed: 3,
            ..Default::default()
        };
        let res = cma_es_minimize(
            |x| x.iter().map(|v| (v - 1.5) * (v - 1.5)).sum(),
            &space,
            &cfg,
            None,
        )
        .unwrap();
        assert!(res.best_loss < 1e-10, "{}", res.best_loss);
        assert!(res.history.iter().all(|e| space.contains(&e.point)));
    }
}
