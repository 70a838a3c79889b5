//! Symmetric five-bar leg reduced to a single joint angle.
//!
//! Each side is a two-bar chain (upper link `l_upper` driven by a motor,
//! lower link `l_lower` meeting its mirror image at the foot). With both
//! motors at the same angle θ from the downward vertical, the hip-to-foot
//! distance is
//!
//! ```text
//! L(θ) = l₁·cos θ + sqrt(l₂² − l₁²·sin²θ)
//! ```
//!
//! The links are massless; inertia comes from the body, the foot and the
//! reflected rotor inertia of the two motors. With generalized coordinates
//! `q = [x_f, θ]` and `x_b = x_f + L(θ) + mount_offset` the mass matrix is
//!
//! ```text
//! M = | m_b + m_f      m_b·J          |
//!     | m_b·J          m_b·J² + 2·I_r |
//! ```
//!
//! Eliminating the θ row (Schur complement) leaves the single foot channel
//! `M_f·ẍ_f + M_f·g = F_c − β·τ − C·θ̇²` that the momentum observer runs on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard on |dL/dθ| below which torque/force maps are refused [m/rad].
pub const JACOBIAN_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkageParams {
    /// Upper (motor-driven) link length [m].
    pub l_upper: f64,
    /// Lower link length [m].
    pub l_lower: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Reflected rotor inertia per motor [kg·m²].
    pub rotor_inertia: f64,
    /// Motor torque constant [N·m/A].
    pub torque_constant: f64,
    pub m_body: f64,
    pub m_foot: f64,
    /// Vertical offset between the body reference point and the hip [m].
    pub mount_offset: f64,
}

impl Default for LinkageParams {
    fn default() -> Self {
        Self {
            l_upper: 0.15,
            l_lower: 0.30,
            theta_min: 0.05,
            theta_max: 1.52,
            rotor_inertia: 5e-4,
            torque_constant: 0.14,
            m_body: 1.0,
            m_foot: 0.3,
            mount_offset: 0.0,
        }
    }
}

impl LinkageParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("linkage: {what}")));
        if !(self.l_upper > 0.0 && self.l_lower > self.l_upper) {
            return bad("require l_lower > l_upper > 0");
        }
        if !(self.theta_min > 0.0 && self.theta_min < self.theta_max && self.theta_max < std::f64::consts::FRAC_PI_2) {
            return bad("require 0 < theta_min < theta_max < pi/2");
        }
        if !(self.m_body > 0.0 && self.m_foot > 0.0 && self.rotor_inertia > 0.0) {
            return bad("masses and rotor_inertia must be positive");
        }
        if !(self.torque_constant > 0.0) {
            return bad("torque_constant must be positive");
        }
        if !self.mount_offset.is_finite() {
            return bad("mount_offset must be finite");
        }
        // J is monotone in magnitude on (0, pi/2), so the lower bound is the worst case.
        let j = Geometry::at(self.theta_min, self).jacobian.abs();
        if j < JACOBIAN_EPSILON {
            return bad("leg jacobian vanishes inside [theta_min, theta_max]");
        }
        Ok(())
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if theta.is_finite() && theta >= self.theta_min && theta <= self.theta_max {
            Ok(())
        } else {
            Err(Error::Domain {
                name: "theta",
                value: theta,
                domain: format!("[{}, {}] rad", self.theta_min, self.theta_max),
            })
        }
    }

    pub fn length_range(&self) -> (f64, f64) {
        (
            Geometry::at(self.theta_max, self).length,
            Geometry::at(self.theta_min, self).length,
        )
    }
}

/// Leg length and its first two angle derivatives, evaluated without bounds
/// checks. Valid for any θ since `l₂ > l₁` keeps the square root real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Geometry {
    pub length: f64,
    pub jacobian: f64,
    pub jacobian_rate: f64,
}

impl Geometry {
    pub fn at(theta: f64, p: &LinkageParams) -> Self {
        let (s, c) = theta.sin_cos();
        let l1 = p.l_upper;
        let root = (p.l_lower * p.l_lower - l1 * l1 * s * s).sqrt();
        let length = l1 * c + root;
        let jacobian = -l1 * s - l1 * l1 * s * c / root;
        let jacobian_rate = -l1 * c - l1 * l1 * (c * c - s * s) / root - l1.powi(4) * s * s * c * c / root.powi(3);
        Self {
            length,
            jacobian,
            jacobian_rate,
        }
    }
}

/// Hip-to-foot distance L(θ) [m].
pub fn leg_length(theta: f64, params: &LinkageParams) -> Result<f64> {
    params.check_theta(theta)?;
    Ok(Geometry::at(theta, params).length)
}

/// dL/dθ [m/rad]; negative inside the workspace (flexing shortens the leg).
pub fn leg_jacobian(theta: f64, params: &LinkageParams) -> Result<f64> {
    params.check_theta(theta)?;
    Ok(Geometry::at(theta, params).jacobian)
}

/// Inverse of [`leg_length`] by bisection; L is strictly decreasing in θ.
pub fn theta_for_length(length: f64, params: &LinkageParams) -> Result<f64> {
    let (lo_len, hi_len) = params.length_range();
    if !(length >= lo_len && length <= hi_len) {
        return Err(Error::Domain {
            name: "leg length",
            value: length,
            domain: format!("[{lo_len}, {hi_len}] m"),
        });
    }
    let (mut a, mut b) = (params.theta_min, params.theta_max);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if Geometry::at(mid, params).length > length {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Coefficients of the reduced foot channel
/// `M_f·ẍ_f + M_f·g = F_c − β·τ − C·θ̇²`, τ being the per-motor torque
/// (positive extends the leg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynamicsCoeffs {
    /// Effective foot-channel mass [kg].
    pub m_f: f64,
    /// dM_f/dθ [kg/rad].
    pub dmf_dtheta: f64,
    /// Torque-to-force coefficient [1/m].
    pub beta: f64,
    /// Centrifugal coefficient [kg·m/rad²].
    pub c_coef: f64,
}

/// Entries of the 2×2 mass matrix in `q = [x_f, θ]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MassMatrix {
    pub m11: f64,
    pub m12: f64,
    pub m22: f64,
}

impl MassMatrix {
    pub fn at(geom: &Geometry, p: &LinkageParams) -> Self {
        let j = geom.jacobian;
        Self {
            m11: p.m_body + p.m_foot,
            m12: p.m_body * j,
            m22: p.m_body * j * j + 2.0 * p.rotor_inertia,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m12
    }
}

pub(crate) fn coeffs_from_geometry(geom: &Geometry, p: &LinkageParams) -> DynamicsCoeffs {
    let mm = MassMatrix::at(geom, p);
    assert!(mm.m22 > 0.0 && mm.determinant() > 0.0, "singular linkage mass matrix");
    let (j, jr) = (geom.jacobian, geom.jacobian_rate);
    let mb = p.m_body;
    let two_ir = 2.0 * p.rotor_inertia;
    let m_f = mm.m11 - mm.m12 * mm.m12 / mm.m22;
    // d/dθ of −m_b²J²/(m_b J² + 2I_r)
    let dmf_dtheta = -2.0 * mb * mb * two_ir * j * jr / (mm.m22 * mm.m22);
    let beta = -2.0 * mb * j / mm.m22;
    let c_coef = mb * jr * two_ir / mm.m22;
    DynamicsCoeffs {
        m_f,
        dmf_dtheta,
        beta,
        c_coef,
    }
}

pub fn reduced_dynamics_coeffs(theta: f64, params: &LinkageParams) -> Result<DynamicsCoeffs> {
    params.check_theta(theta)?;
    Ok(coeffs_from_geometry(&Geometry::at(theta, params), params))
}

/// Quasi-static leg force from per-motor torque, `F = 2τ/|dL/dθ|`.
/// Positive pushes the foot into the ground.
pub fn quasi_static_force(tau_per_motor: f64, theta: f64, params: &LinkageParams) -> Result<f64> {
    let j = Geometry::at(theta, params).jacobian.abs();
    if !(j >= JACOBIAN_EPSILON) {
        return Err(Error::Singularity { theta, jacobian: j });
    }
    Ok(2.0 * tau_per_motor / j)
}
