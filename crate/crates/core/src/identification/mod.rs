//! Terrain-parameter recovery from stance data and intrusion sweeps.
//!
//! Hop-based fits regress force on depth only; the slope is the stiffness
//! estimate. Velocity and added-mass parameters come from the constant-speed
//! intrusion rig, where z̈ = 0 removes the inertial term.

mod depth_speed;
mod regression;
mod samples;
mod treatment;

pub use depth_speed::{added_mass_reconstruction, fit_depth_speed_model, DepthSpeedFit, Reconstruction};
pub use regression::{acceleration_weight, ols_linear_fit, wls_linear_fit, FitResult, WeightConfig};
pub use samples::{extract_samples, local_quadratic_derivative, KinematicsSource, WindowPolicy};
pub use treatment::{
    fit_trial, mean_sem, treatment_comparison, Condition, ConditionSummary, TreatmentOptions, TreatmentReport,
    TrialEstimate, TrialFit,
};

use serde::{Deserialize, Serialize};

/// Which force channel a regression sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceSource {
    #[serde(rename = "QS")]
    QuasiStatic,
    #[serde(rename = "MO")]
    Observer,
    Loadcell,
}

/// The three identification treatments being compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Treatment {
    /// OLS on quasi-static force.
    #[serde(rename = "noMO_noGD")]
    NoMoNoGd,
    /// OLS on observer force.
    #[serde(rename = "MO_noGD")]
    MoNoGd,
    /// Acceleration-weighted LS on observer force.
    #[serde(rename = "MO_GD")]
    MoGd,
}

impl Treatment {
    pub const ALL: [Treatment; 3] = [Treatment::NoMoNoGd, Treatment::MoNoGd, Treatment::MoGd];

    pub fn label(self) -> &'static str {
        match self {
            Treatment::NoMoNoGd => "noMO_noGD",
            Treatment::MoNoGd => "MO_noGD",
            Treatment::MoGd => "MO_GD",
        }
    }
}

impl std::fmt::Display for Treatment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    /// Penetration depth [m].
    pub z: f64,
    /// [m/s]
    pub z_dot: f64,
    /// [m/s²]
    pub z_ddot: f64,
    /// [N]
    pub f: f64,
    pub t: f64,
    pub source: ForceSource,
}
