//! Depth-linear force fits with an intercept.

use serde::{Deserialize, Serialize};

use super::{RegressionSample, Treatment};
use crate::error::{Error, Result};

/// Sigmoid inverse-variance weighting on |z̈|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    /// [N]
    pub sigma_good: f64,
    /// [N]
    pub sigma_bad: f64,
    /// Sigmoid slope [s²/m].
    pub k_w: f64,
    /// Acceleration at the sigmoid midpoint [m/s²].
    pub a0: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            sigma_good: 1.0,
            sigma_bad: 20.0,
            k_w: 0.5,
            a0: 5.0,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_good > 0.0 && self.sigma_bad >= self.sigma_good && self.k_w > 0.0 && self.a0 > 0.0) {
            return Err(Error::Config(
                "weight: require 0 < sigma_good <= sigma_bad, k_w > 0, a0 > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Inverse-variance weight [1/N²] for a sample with acceleration `z_ddot`.
pub fn acceleration_weight(z_ddot: f64, config: &WeightConfig) -> f64 {
    // logistic written to stay finite for either sign of a large exponent
    let x = config.k_w * (z_ddot.abs() - config.a0);
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    let sigma = config.sigma_good + (config.sigma_bad - config.sigma_good) * s;
    1.0 / (sigma * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Slope of force against depth [N/m].
    pub k_est: f64,
    /// [N]
    pub intercept: f64,
    /// Weighted root-mean-square residual [N].
    pub rmse: f64,
    pub n_samples: usize,
    pub treatment: Option<Treatment>,
}

/// Ordinary least squares `F ≈ k·z + c`.
pub fn ols_linear_fit(samples: &[RegressionSample]) -> Result<FitResult> {
    weighted_fit(samples, |_| 1.0)
}

/// Weighted least squares `F ≈ k·z + c` with [`acceleration_weight`].
pub fn wls_linear_fit(samples: &[RegressionSample], config: &WeightConfig) -> Result<FitResult> {
    config.validate()?;
    weighted_fit(samples, |s| acceleration_weight(s.z_ddot, config))
}

fn weighted_fit(samples: &[RegressionSample], weight: impl Fn(&RegressionSample) -> f64) -> Result<FitResult> {
    if samples.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "{} samples, need at least 2",
            samples.len()
        )));
    }
    if let Some(s) = samples.iter().find(|s| !(s.f.is_finite() && s.z.is_finite())) {
        return Err(Error::DegenerateFit(format!("non-finite sample at t = {}", s.t)));
    }
    let w: Vec<f64> = samples.iter().map(&weight).collect();
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::DegenerateFit("total weight is zero".into()));
    }
    // centered normal equations
    let zbar = samples.iter().zip(&w).map(|(s, w)| w * s.z).sum::<f64>() / sw;
    let fbar = samples.iter().zip(&w).map(|(s, w)| w * s.f).sum::<f64>() / sw;
    let (mut szz, mut szf) = (0.0, 0.0);
    for (s, w) in samples.iter().zip(&w) {
        let dz = s.z - zbar;
        szz += w * dz * dz;
        szf += w * dz * (s.f - fbar);
    }
    let scale = samples.iter().zip(&w).map(|(s, w)| w * s.z * s.z).sum::<f64>();
    if !(szz > 1e-12 * scale) {
        return Err(Error::DegenerateFit("all samples share one depth".into()));
    }
    let k_est = szf / szz;
    let intercept = fbar - k_est * zbar;
    let sse: f64 = samples
        .iter()
        .zip(&w)
        .map(|(s, w)| w * (s.f - k_est * s.z - intercept).powi(2))
        .sum();
    Ok(FitResult {
        k_est,
        intercept,
        rmse: (sse / sw).sqrt(),
        n_samples: samples.len(),
        treatment: None,
    })
}
