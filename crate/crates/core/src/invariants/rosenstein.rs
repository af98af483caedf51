//! Largest Lyapunov exponent from a sampled trajectory (Rosenstein method).

use std::ops::Range;

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RosensteinConfig {
    /// Number of delayed copies stacked into each embedded point.
    pub embed_dim: usize,
    /// Delay between copies, in samples.
    pub delay: usize,
    /// Neighbors closer than this many samples in time are excluded.
    pub theiler_window: usize,
    /// Range of divergence steps used for the slope fit.
    pub fit_range: Range<usize>,
    /// Upper bound on the number of reference points (evenly strided).
    pub max_reference_points: usize,
    /// Only the closest fraction of reference/neighbor pairs enters the
    /// average; 1.0 keeps every pair.
    pub neighbor_quantile: f64,
}

impl RosensteinConfig {
    /// Defaults derived from the data.
    ///
    /// The delay is the first zero crossing of the autocorrelation of the
    /// first component and the Theiler window is `delay * embed_dim`. A series
    /// that already carries the full `system_dim` state is used as is
    /// (`embed_dim = 1`); a lower-dimensional observation is delay-embedded in
    /// `system_dim` dimensions. The slope is fit over the first `2 * delay`
    /// steps, which spans one oscillation of the divergence curve.
    pub fn default_for(series: &TimeSeries, system_dim: usize) -> Result<Self> {
        let delay = first_autocorrelation_zero(&series.component(0))?;
        let embed_dim = if series.dim() >= system_dim {
            1
        } else {
            system_dim.div_ceil(series.dim())
        };
        Ok(Self {
            embed_dim,
            delay,
            theiler_window: delay * embed_dim,
            fit_range: 0..(2 * delay).max(2),
            max_reference_points: 2_000,
            neighbor_quantile: 1.0,
        })
    }
}

/// Smallest positive lag at which the autocorrelation of `x` is `<= 0`.
pub fn first_autocorrelation_zero(x: &[f64]) -> Result<usize> {
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("series too short for an autocorrelation"));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var: f64 = centered.iter().map(|v| v * v).sum();
    if var == 0.0 {
        return Err(Error::DegenerateData("series is constant".into()));
    }
    for lag in 1..n {
        let c: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum();
        if c <= 0.0 {
            return Ok(lag);
        }
    }
    Ok(n - 1)
}

/// Rosenstein estimate of the largest Lyapunov exponent, per unit time.
pub fn largest_le_from_data(series: &TimeSeries, cfg: &RosensteinConfig) -> Result<f64> {
    if cfg.embed_dim == 0 || cfg.delay == 0 && cfg.embed_dim > 1 {
        return Err(Error::invalid("embedding needs embed_dim >= 1 and a positive delay"));
    }
    if cfg.fit_range.len() < 2 {
        return Err(Error::invalid("fit range needs at least two points"));
    }
    let span = (cfg.embed_dim - 1) * cfg.delay;
    let horizon = cfg.fit_range.end;
    let t = series.len();
    if t <= span + horizon + cfg.theiler_window + 1 {
        return Err(Error::invalid(format!(
            "series of {t} steps is too short for embedding span {span}, \
             fit horizon {horizon} and Theiler window {}",
            cfg.theiler_window
        )));
    }
    let spread = (0..series.dim()).map(|k| {
        let c = series.component(k);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    });
    if spread.into_iter().all(|s| s == 0.0) {
        return Err(Error::DegenerateData("series is constant".into()));
    }

    let points = embed(series, cfg.embed_dim, cfg.delay);
    let width = series.dim() * cfg.embed_dim;
    let n_points = points.len() / width;
    let point = |i: usize| &points[i * width..(i + 1) * width];
    // Candidates must have `horizon` successors available.
    let usable = n_points - horizon;

    if !(cfg.neighbor_quantile > 0.0 && cfg.neighbor_quantile <= 1.0) {
        return Err(Error::invalid("neighbor_quantile must be in (0, 1]"));
    }

    let stride = usable.div_ceil(cfg.max_reference_points.max(1)).max(1);
    let mut pairs = Vec::new();
    for i in (0..usable).step_by(stride) {
        let xi = point(i);
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..usable {
            if i.abs_diff(j) <= cfg.theiler_window {
                continue;
            }
            let d = sq_dist(xi, point(j));
            if d > 0.0 && d < best.0 {
                best = (d, j);
            }
        }
        if best.1 != usize::MAX {
            pairs.push((best.0, i, best.1));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = ((pairs.len() as f64 * cfg.neighbor_quantile).ceil() as usize).min(pairs.len());

    let mut log_sums = vec![0.0; horizon];
    let mut counts = vec![0usize; horizon];
    for &(_, i, j) in &pairs[..keep] {
        for (k, (sum, count)) in log_sums.iter_mut().zip(counts.iter_mut()).enumerate() {
            let d = sq_dist(point(i + k), point(j + k));
            if d > 0.0 {
                *sum += 0.5 * d.ln();
                *count += 1;
            }
        }
    }

    let curve: Vec<(f64, f64)> = cfg
        .fit_range
        .clone()
        .filter(|&k| counts[k] > 0)
        .map(|k| (k as f64, log_sums[k] / counts[k] as f64))
        .collect();
    if curve.len() < 2 {
        return Err(Error::DegenerateData(
            "no valid nearest-neighbor pairs for the divergence curve".into(),
        ));
    }
    Ok(least_squares_slope(&curve) / series.dt())
}

fn embed(series: &TimeSeries, m: usize, delay: usize) -> Vec<f64> {
    let span = (m - 1) * delay;
    let n = series.len() - span;
    let mut out = Vec::with_capacity(n * m * series.dim());
    for i in 0..n {
        for j in 0..m {
            out.extend_from_slice(series.row(i + j * delay));
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_degenerate() {
        let ts = TimeSeries::new(0.01, 1, vec![3.0; 500]).unwrap();
        let cfg = RosensteinConfig {
            embed_dim: 2,
            delay: 5,
            theiler_window: 10,
            fit_range: 0..10,
            max_reference_points: 100,
            neighbor_quantile: 1.0,
        };
        assert!(matches!(
            largest_le_from_data(&ts, &cfg),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            RosensteinConfig::default_for(&ts, 1),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn short_series_is_rejected() {
        let ts = TimeSeries::new(0.01, 1, (0..20).map(|i| i as f64).collect()).unwrap();
        let cfg = RosensteinConfig {
            embed_dim: 3,
            delay: 4,
            theiler_window: 5,
            fit_range: 0..10,
            max_reference_points: 100,
            neighbor_quantile: 1.0,
        };
        assert!(matches!(
            largest_le_from_data(&ts, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn autocorrelation_zero_of_sine_is_quarter_period() {
        let period = 200.0;
        let x: Vec<f64> = (0..4000)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / period).sin())
            .collect();
        let lag = first_autocorrelation_zero(&x).unwrap();
        assert!((lag as f64 - period / 4.0).abs() <= 2.0, "lag {lag}");
    }

    #[test]
    fn slope_of_exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 2.0 * k as f64 - 1.0)).collect();
        assert!((least_squares_slope(&pts) - 2.0).abs() < 1e-12);
    }
}
