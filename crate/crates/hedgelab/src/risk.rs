//! PnL tail metrics: empirical VaR/CVaR, the reported metric row and
//! histogram data.
//!
//! Convention: `q% VaR` is the empirical PnL quantile at level `1 - q/100`
//! taken as the lower order statistic at index `ceil((1 - q/100) * n)`
//! (1-based). So 95% VaR is the 5th percentile of PnL (the bad tail) and
//! 5% VaR is the 95th percentile (the good tail); `q% CVaR` is the mean of
//! all samples at or below the matching VaR.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("empty sample set")]
    Empty,
    #[error("skewness undefined for fewer than 3 samples or zero variance")]
    DegenerateSkewness,
}

/// Per-episode PnL samples with the seeds that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PnlSamples {
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl PnlSamples {
    pub fn new(values: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self { values, seeds }
    }
}

/// One row of the reported metric table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskReport {
    pub mean: f64,
    pub std: f64,
    /// The "Mean-Std" column: mean - 1.645 * std.
    pub mean_minus_1p645_std: f64,
    pub var5: f64,
    pub cvar5: f64,
    pub var95: f64,
    pub cvar95: f64,
    pub gamma_ratio: f64,
    pub skewness: f64,
    pub n: usize,
    #[serde(default)]
    pub seed_set: Vec<u64>,
    #[serde(default)]
    pub config_fingerprint: String,
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite PnL sample"));
    v
}

/// Empirical `q% VaR` of the PnL samples (see module docs for the sign/level
/// convention).
pub fn var_q(samples: &[f64], q: f64) -> Result<f64, RiskError> {
    if samples.is_empty() {
        return Err(RiskError::Empty);
    }
    let v = sorted(samples);
    Ok(var_from_sorted(&v, q))
}

fn var_from_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // ceil((1 - q/100) * n), guarded against float noise pushing an exact
    // integer over the next ceiling (e.g. (1 - 0.95) * 100 = 5.000000000000004).
    let target = (100.0 - q) * n as f64 / 100.0;
    let idx = ((target - 1e-9).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

/// Mean of the samples at or below `var_q`.
pub fn cvar_q(samples: &[f64], q: f64) -> Result<f64, RiskError> {
    if samples.is_empty() {
        return Err(RiskError::Empty);
    }
    let v = sorted(samples);
    let var = var_from_sorted(&v, q);
    let tail: Vec<f64> = v.iter().copied().take_while(|&x| x <= var).collect();
    if tail.is_empty() {
        return Ok(var);
    }
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(samples);
    (samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
}

/// Bias-corrected sample skewness (third standardized moment).
pub fn skewness(samples: &[f64]) -> Result<f64, RiskError> {
    let n = samples.len();
    if n < 3 {
        return Err(RiskError::DegenerateSkewness);
    }
    let m = mean(samples);
    let nf = n as f64;
    let m2 = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf;
    let m3 = samples.iter().map(|x| (x - m).powi(3)).sum::<f64>() / nf;
    if m2 <= 0.0 {
        return Err(RiskError::DegenerateSkewness);
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}

/// Assemble the full metric row. `gamma_ratio` is computed by the strategy
/// layer from episode traces and passed through.
pub fn report(samples: &PnlSamples, gamma_ratio: f64) -> Result<RiskReport, RiskError> {
    if samples.values.is_empty() {
        return Err(RiskError::Empty);
    }
    let v = &samples.values;
    let m = mean(v);
    let s = std_dev(v);
    Ok(RiskReport {
        mean: m,
        std: s,
        mean_minus_1p645_std: m - 1.645 * s,
        var5: var_q(v, 5.0)?,
        cvar5: cvar_q(v, 5.0)?,
        var95: var_q(v, 95.0)?,
        cvar95: cvar_q(v, 95.0)?,
        gamma_ratio,
        skewness: skewness(v).unwrap_or(0.0),
        n: v.len(),
        seed_set: samples.seeds.clone(),
        config_fingerprint: String::new(),
    })
}

/// Equal-width histogram over `[min, max]`; the final bin includes its right
/// edge. A degenerate range widens to one unit so the counts still sum to n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(samples: &[f64], n_bins: usize) -> Result<Histogram, RiskError> {
    if samples.is_empty() {
        return Err(RiskError::Empty);
    }
    assert!(n_bins >= 1, "histogram needs at least one bin");
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        let mut b = ((x - lo) / width) as usize;
        if b >= n_bins {
            b = n_bins - 1;
        }
        counts[b] += 1;
    }
    let edges = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    Ok(Histogram { edges, counts })
}
