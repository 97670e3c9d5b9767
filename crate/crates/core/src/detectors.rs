//! Classifying mechanism answers as noisy or noise-free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseVerdict {
    CleanZero,
    CleanOne,
    Noisy,
}

pub fn classify_direct(value: f64) -> NoiseVerdict {
    if value == 0.0 {
        NoiseVerdict::CleanZero
    } else if value == 1.0 {
        NoiseVerdict::CleanOne
    } else {
        NoiseVerdict::Noisy
    }
}

/// Counter to rounding: a noise-free query repeats the same bit every time.
pub fn classify_repeated(answers: &[f64]) -> Result<NoiseVerdict> {
    let Some(&first) = answers.first() else {
        return Err(Error::InvalidArgument("no answers to classify".into()));
    };
    if answers.len() < 2 {
        return Err(Error::InvalidArgument("repeated classification needs at least 2 answers".into()));
    }
    if answers.iter().any(|&a| a != first) {
        return Ok(NoiseVerdict::Noisy);
    }
    Ok(classify_direct(first))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceTestConfig {
    pub m: usize,
    pub threshold: f64,
    pub eps_total: f64,
}

impl VarianceTestConfig {
    pub const DEFAULT_M: usize = 1000;
    pub const DEFAULT_THRESHOLD: f64 = 5.0;

    pub fn new(m: usize, threshold: f64, eps_total: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("variance test needs m >= 2, got {m}")));
        }
        if !(threshold > 2.0 && threshold < 8.0) {
            return Err(Error::InvalidArgument(format!("threshold {threshold} must lie strictly between 2 and 8")));
        }
        if !(eps_total > 0.0 && eps_total.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps_total must be positive, got {eps_total}")));
        }
        Ok(Self { m, threshold, eps_total })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaleVerdict {
    /// Scale `m/ε`: the hardened mechanism saw Λ = 0.
    LowScale,
    /// Scale `2m/ε`: Λ = 1.
    HighScale,
}

impl ScaleVerdict {
    pub fn sensitivity(self) -> u8 {
        match self {
            ScaleVerdict::LowScale => 0,
            ScaleVerdict::HighScale => 1,
        }
    }
}

/// `(ε²/m²) · s²` with `s²` the unbiased sample variance.
pub fn psi_statistic(samples: &[f64], eps_total: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("psi needs m >= 2, got {m}")));
    }
    if samples.len() != m {
        return Err(Error::InvalidArgument(format!("expected {m} samples, got {}", samples.len())));
    }
    let mean = samples.iter().sum::<f64>() / m as f64;
    let ss: f64 = samples.iter().map(|z| (z - mean) * (z - mean)).sum();
    let scale = eps_total / m as f64;
    Ok(scale * scale * ss / (m - 1) as f64)
}

pub fn classify_variance(samples: &[f64], config: &VarianceTestConfig) -> Result<ScaleVerdict> {
    let psi = psi_statistic(samples, config.eps_total, config.m)?;
    Ok(if psi < config.threshold { ScaleVerdict::LowScale } else { ScaleVerdict::HighScale })
}
