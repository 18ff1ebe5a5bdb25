//! dB conversion, empirical CDFs, normal fits and the Kolmogorov–Smirnov
//! distance between a dB sample set and its moment-fitted normal.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("power must be positive to convert to dB, got {0}")]
    NonPositivePower(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("samples are constant; standard deviation is zero")]
    Constant,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("invalid normal fit (std {0})")]
    InvalidFit(f64),
    #[error("unsupported significance level {0}; use 0.10, 0.05 or 0.01")]
    Alpha(f64),
}

pub fn to_db(power: f64) -> Result<f64, StatsError> {
    if power > 0.0 && power.is_finite() {
        Ok(10.0 * power.log10())
    } else {
        Err(StatsError::NonPositivePower(power))
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Subtracts the sample mean.
pub fn center(samples: &[f64]) -> Result<Vec<f64>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let m = mean(samples);
    Ok(samples.iter().map(|x| x - m).collect())
}

/// Standard deviation with the `n − 1` divisor.
pub fn sample_std(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: samples.len() });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (samples.len() - 1) as f64).sqrt())
}

/// Standard normal CDF, `Φ(z) = erfc(−z/√2)/2`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Right-continuous step function `F(x) = #{samples ≤ x}/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self, StatsError> {
        if samples.iter().any(|x| x.is_nan()) {
            return Err(StatsError::NonFinite);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mean_db: f64,
    pub std_db: f64,
}

impl NormalFit {
    pub fn cdf(&self, x: f64) -> f64 {
        normal_cdf((x - self.mean_db) / self.std_db)
    }

    fn validate(&self) -> Result<(), StatsError> {
        if self.std_db > 0.0 && self.std_db.is_finite() && self.mean_db.is_finite() {
            Ok(())
        } else {
            Err(StatsError::InvalidFit(self.std_db))
        }
    }
}

/// Normal with the sample mean and the `n − 1` standard deviation.
pub fn fit_normal(samples: &[f64]) -> Result<NormalFit, StatsError> {
    let std_db = sample_std(samples)?;
    if std_db == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok(NormalFit { mean_db: mean(samples), std_db })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub fit: NormalFit,
    /// Position in sorted order where the supremum is attained.
    #[serde(skip)]
    pub argmax: usize,
}

/// Largest absolute gap between the empirical CDF and `fit`, checking both
/// sides of every step.
pub fn ks_statistic(samples: &[f64], fit: NormalFit) -> Result<KsResult, StatsError> {
    fit.validate()?;
    if samples.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: samples.len() });
    }
    let ecdf = EmpiricalCdf::new(samples)?;
    Ok(ks_sorted(ecdf.sorted_samples(), fit))
}

pub(crate) fn ks_sorted(sorted: &[f64], fit: NormalFit) -> KsResult {
    let n = sorted.len() as f64;
    let mut best = (0.0, 0);
    for (i, &x) in sorted.iter().enumerate() {
        let f = fit.cdf(x);
        let gap = ((i + 1) as f64 / n - f).abs().max((f - i as f64 / n).abs());
        if gap > best.0 {
            best = (gap, i);
        }
    }
    KsResult { statistic: best.0.min(1.0), n: sorted.len(), fit, argmax: best.1 }
}

/// Fits a normal and measures the K-S distance to it.
pub fn ks_against_fit(samples: &[f64]) -> Result<KsResult, StatsError> {
    ks_statistic(samples, fit_normal(samples)?)
}

/// Asymptotic one-sample K-S critical value `c(α)/√n`.
pub fn ks_critical(alpha: f64, n: usize) -> Result<f64, StatsError> {
    let c = if alpha == 0.10 {
        1.224
    } else if alpha == 0.05 {
        1.358
    } else if alpha == 0.01 {
        1.628
    } else {
        return Err(StatsError::Alpha(alpha));
    };
    if n == 0 {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    Ok(c / (n as f64).sqrt())
}
