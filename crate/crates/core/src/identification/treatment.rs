//! Per-condition comparison of the three stiffness-identification treatments.

use serde::{Deserialize, Serialize};

use super::{
    extract_samples, ols_linear_fit, wls_linear_fit, DepthSpeedFit, ForceSource, KinematicsSource, Treatment,
    WeightConfig, WindowPolicy,
};
use crate::error::{Error, Result};
use crate::estimation::ForceEstimateSeries;
use crate::simulator::StrideEvents;
use crate::terrain::TerrainParams;

/// One sweep cell: touchdown speed [m/s] and compression stiffness [N/m].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub v_td: f64,
    pub k_c: f64,
}

/// Estimates and events of one completed hop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEstimate {
    pub condition: Condition,
    pub seed: u64,
    pub series: ForceEstimateSeries,
    pub events: StrideEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentOptions {
    pub weights: WeightConfig,
    pub kinematics: KinematicsSource,
    pub half_width: usize,
    /// Subtract the fitted velocity term from the observer force before the
    /// weighted fit; weighting alone when `None`.
    pub drag_correction: Option<DepthSpeedFit>,
}

impl Default for TreatmentOptions {
    fn default() -> Self {
        Self {
            weights: WeightConfig::default(),
            kinematics: KinematicsSource::Estimated,
            half_width: 5,
            drag_correction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialFit {
    pub v_td: f64,
    pub k_c: f64,
    pub treatment: Treatment,
    pub seed: u64,
    pub k_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub v_td: f64,
    pub k_c: f64,
    pub treatment: Treatment,
    pub n: usize,
    pub mean_k: f64,
    pub sem_k: f64,
    /// |mean_k − k_gt| / k_gt
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TreatmentReport {
    pub k_gt: f64,
    /// Sorted by (v_td, k_c, treatment).
    pub conditions: Vec<ConditionSummary>,
    /// Sorted by (v_td, k_c, treatment, seed).
    pub trials: Vec<TrialFit>,
}

impl TreatmentReport {
    pub fn summary(&self, v_td: f64, k_c: f64, treatment: Treatment) -> Option<&ConditionSummary> {
        self.conditions
            .iter()
            .find(|c| c.v_td == v_td && c.k_c == k_c && c.treatment == treatment)
    }
}

/// Mean and standard error (sample standard deviation over √n); the SEM
/// of a single value is reported as zero.
pub fn mean_sem(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("no values to summarize".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Fit the three treatments to one trial.
pub fn fit_trial(
    trial: &TrialEstimate,
    terrain: &TerrainParams,
    options: &TreatmentOptions,
) -> Result<[(Treatment, f64); 3]> {
    let policy = |source| WindowPolicy {
        source,
        kinematics: options.kinematics,
        half_width: options.half_width,
    };
    let qs = extract_samples(&trial.series, &trial.events, terrain, &policy(ForceSource::QuasiStatic))?;
    let mo = extract_samples(&trial.series, &trial.events, terrain, &policy(ForceSource::Observer))?;
    let gd = match &options.drag_correction {
        Some(fit) => mo
            .iter()
            .map(|s| {
                let drag = if s.z_dot >= 0.0 {
                    fit.gradient(s.z) * s.z_dot * s.z_dot
                } else {
                    0.0
                };
                super::RegressionSample { f: s.f - drag, ..*s }
            })
            .collect(),
        None => mo.clone(),
    };
    Ok([
        (Treatment::NoMoNoGd, ols_linear_fit(&qs)?.k_est),
        (Treatment::MoNoGd, ols_linear_fit(&mo)?.k_est),
        (Treatment::MoGd, wls_linear_fit(&gd, &options.weights)?.k_est),
    ])
}

/// Per-condition mean ± SEM of the stiffness estimate for each treatment.
pub fn treatment_comparison(
    trials: &[TrialEstimate],
    k_gt: f64,
    terrain: &TerrainParams,
    options: &TreatmentOptions,
) -> Result<TreatmentReport> {
    if trials.is_empty() {
        return Err(Error::Empty("no trials to compare".into()));
    }
    if !(k_gt > 0.0) {
        return Err(Error::Config(format!("ground-truth stiffness {k_gt} must be positive")));
    }
    let mut fits = Vec::with_capacity(3 * trials.len());
    for trial in trials {
        let per = fit_trial(trial, terrain, options).map_err(|e| {
            Error::TrialMalformed(format!(
                "v_td {} k_c {} seed {}: {e}",
                trial.condition.v_td, trial.condition.k_c, trial.seed
            ))
        })?;
        for (treatment, k_est) in per {
            fits.push(TrialFit {
                v_td: trial.condition.v_td,
                k_c: trial.condition.k_c,
                treatment,
                seed: trial.seed,
                k_est,
            });
        }
    }
    fits.sort_by(|a, b| {
        a.v_td
            .total_cmp(&b.v_td)
            .then(a.k_c.total_cmp(&b.k_c))
            .then(a.treatment.cmp(&b.treatment))
            .then(a.seed.cmp(&b.seed))
    });

    // fits are sorted, so each chunk is one condition × treatment
    let conditions = fits
        .chunk_by(|a, b| a.v_td == b.v_td && a.k_c == b.k_c && a.treatment == b.treatment)
        .map(|chunk| {
            let ks: Vec<f64> = chunk.iter().map(|f| f.k_est).collect();
            let (mean_k, sem_k) = mean_sem(&ks)?;
            Ok(ConditionSummary {
                v_td: chunk[0].v_td,
                k_c: chunk[0].k_c,
                treatment: chunk[0].treatment,
                n: ks.len(),
                mean_k,
                sem_k,
                rel_err: (mean_k - k_gt).abs() / k_gt,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TreatmentReport {
        k_gt,
        conditions,
        trials: fits,
    })
}
