//! Raibert-style vertical hopping controller.
//!
//! The virtual leg is a spring-damper between body and foot whose stiffness
//! is switched from a compliant compression setting to a stiffer extension
//! setting at maximum compression. In flight the leg returns to its
//! compression neutral length under heavier damping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkage::{Geometry, LinkageParams, JACOBIAN_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TouchdownDetector {
    /// Foot below the surface and moving down (needs ground truth).
    Geometric,
    /// Contact force above `contact_force_threshold` (onboard variant).
    ForceThreshold,
}

/// Controller gains in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// [N/m]
    pub k_compress: f64,
    /// [N/m]
    pub k_extend: f64,
    /// [m]
    pub l0_compress: f64,
    /// [m]
    pub l0_extend: f64,
    /// [N·s/m]
    pub b_stance: f64,
    /// [N·s/m]
    pub b_flight: f64,
    /// [N]
    pub contact_force_threshold: f64,
    /// Minimum shortening below `l0_compress` before the compression phase
    /// may end [m]; keeps touchdown jitter from ending compression early.
    pub min_compression: f64,
    pub touchdown_detector: TouchdownDetector,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k_compress: 375.0,
            k_extend: 500.0,
            l0_compress: 0.38,
            l0_extend: 0.39,
            b_stance: 2.0,
            b_flight: 20.0,
            contact_force_threshold: 1.0,
            min_compression: 1e-3,
            touchdown_detector: TouchdownDetector::Geometric,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self, linkage: &LinkageParams) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("controller: {what}")));
        if !(self.k_compress > 0.0 && self.k_extend >= self.k_compress) {
            return bad("require k_extend >= k_compress > 0");
        }
        let (lo, hi) = linkage.length_range();
        for (name, l0) in [("l0_compress", self.l0_compress), ("l0_extend", self.l0_extend)] {
            if !(l0 > lo && l0 < hi) {
                return Err(Error::Config(format!(
                    "controller: {name} = {l0} m outside the leg workspace ({lo:.4}, {hi:.4}) m"
                )));
            }
        }
        if !(self.b_stance >= 0.0 && self.b_flight >= 0.0) {
            return bad("damping must be nonnegative");
        }
        if !(self.contact_force_threshold > 0.0) {
            return bad("contact_force_threshold must be positive");
        }
        if !(self.min_compression >= 0.0) {
            return bad("min_compression must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    Flight,
    Compression,
    Extension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    /// Time the phase was entered [s].
    pub entered_at: f64,
}

impl Phase {
    pub fn flight(t: f64) -> Self {
        Self {
            kind: PhaseKind::Flight,
            entered_at: t,
        }
    }
}

/// Signals the state machine looks at on each tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegSignals {
    pub t: f64,
    /// Virtual leg length [m].
    pub length: f64,
    /// dL/dt [m/s].
    pub length_rate: f64,
    /// Foot penetration depth [m].
    pub penetration: f64,
    /// Foot vertical velocity [m/s].
    pub foot_velocity: f64,
    /// Contact force estimate or measurement [N].
    pub contact_force: f64,
}

/// One tick of the stance/flight state machine. Transitions only follow
/// Flight → Compression → Extension → Flight.
pub fn next_phase(phase: Phase, s: &LegSignals, config: &ControllerConfig) -> Phase {
    let to = |kind| Phase { kind, entered_at: s.t };
    match phase.kind {
        PhaseKind::Flight => {
            let contact = match config.touchdown_detector {
                TouchdownDetector::Geometric => s.penetration > 0.0 && s.foot_velocity < 0.0,
                TouchdownDetector::ForceThreshold => s.contact_force > config.contact_force_threshold,
            };
            if contact {
                to(PhaseKind::Compression)
            } else {
                phase
            }
        }
        PhaseKind::Compression => {
            let compressed = config.l0_compress - s.length > config.min_compression;
            if compressed && s.length_rate >= 0.0 {
                to(PhaseKind::Extension)
            } else {
                phase
            }
        }
        PhaseKind::Extension => {
            if s.contact_force < config.contact_force_threshold && s.foot_velocity > 0.0 {
                to(PhaseKind::Flight)
            } else {
                phase
            }
        }
    }
}

/// Axial virtual-leg force [N]; positive pushes body and foot apart.
pub fn virtual_leg_force(phase: PhaseKind, length: f64, length_rate: f64, config: &ControllerConfig) -> f64 {
    match phase {
        PhaseKind::Compression => config.k_compress * (config.l0_compress - length) - config.b_stance * length_rate,
        PhaseKind::Extension => config.k_extend * (config.l0_extend - length) - config.b_stance * length_rate,
        PhaseKind::Flight => config.k_compress * (config.l0_compress - length) - config.b_flight * length_rate,
    }
}

/// Per-motor torque realizing an axial leg force, `τ = F·|dL/dθ|/2`.
pub fn motor_torque(f_leg: f64, theta: f64, params: &LinkageParams) -> Result<f64> {
    let j = Geometry::at(theta, params).jacobian.abs();
    if !(j >= JACOBIAN_EPSILON) {
        return Err(Error::Singularity { theta, jacobian: j });
    }
    Ok(f_leg * j / 2.0)
}
