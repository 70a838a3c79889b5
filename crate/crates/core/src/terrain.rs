//! Granular reaction law.
//!
//! ```text
//! F_g(z, ż, z̈) = k·z + (dm_a/dz)·ż² + m_a(z)·z̈,    m_a(z) = m_∞·(1 − e^(−z/z_c))
//! ```
//!
//! `z` is penetration depth (positive downward). The two momentum-flux terms
//! act only while the foot is penetrating (ż ≥ 0) and the total is clamped at
//! zero: loose grains never pull the foot down.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainParams {
    /// Depth stiffness [N/m].
    pub k_stiff: f64,
    /// Saturated added mass [kg].
    pub m_a_inf: f64,
    /// Added-mass saturation depth [m].
    pub z_c: f64,
    /// Grain diameter [m].
    pub d_grain: f64,
    /// Height of the undisturbed surface [m].
    pub surface_height: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            k_stiff: 800.0,
            m_a_inf: 0.15,
            z_c: 0.015,
            d_grain: 300e-6,
            surface_height: 0.0,
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("terrain: {what}")));
        if !(self.k_stiff > 0.0) {
            return bad("k_stiff must be positive");
        }
        if !(self.m_a_inf >= 0.0) {
            return bad("m_a_inf must be nonnegative");
        }
        if !(self.z_c > 0.0) {
            return bad("z_c must be positive");
        }
        if !(self.d_grain > 0.0 && self.d_grain < 0.01) {
            return bad("d_grain must lie in (0, 0.01) m");
        }
        if !self.surface_height.is_finite() {
            return bad("surface_height must be finite");
        }
        Ok(())
    }
}

/// Terrain force split into its three physical contributions [N].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceDecomposition {
    pub f_static: f64,
    pub f_drag: f64,
    pub f_added: f64,
    pub f_total: f64,
}

pub fn penetration_depth(x_f: f64, params: &TerrainParams) -> f64 {
    (params.surface_height - x_f).max(0.0)
}

/// Added mass and its depth gradient, `(m_a [kg], dm_a/dz [kg/m])`.
pub fn added_mass_profile(z: f64, params: &TerrainParams) -> (f64, f64) {
    let z = z.max(0.0);
    let decay = (-z / params.z_c).exp();
    (params.m_a_inf * (1.0 - decay), params.m_a_inf / params.z_c * decay)
}

/// Terrain reaction for penetration state `(z, ż, z̈)`.
pub fn terrain_force(z: f64, z_dot: f64, z_ddot: f64, params: &TerrainParams) -> ForceDecomposition {
    if !(z > 0.0) {
        return ForceDecomposition::default();
    }
    let f_static = params.k_stiff * z;
    let (f_drag, f_added) = if z_dot >= 0.0 {
        let (m_a, grad) = added_mass_profile(z, params);
        (grad * z_dot * z_dot, m_a * z_ddot)
    } else {
        (0.0, 0.0)
    };
    let sum = f_static + f_drag + f_added;
    if sum < 0.0 {
        ForceDecomposition {
            f_static,
            f_drag,
            f_added,
            f_total: 0.0,
        }
    } else {
        ForceDecomposition {
            f_static,
            f_drag,
            f_added,
            f_total: sum,
        }
    }
}

/// Speed above which velocity-dependent grain forces matter, `sqrt(2·d·g)` [m/s].
pub fn inertial_threshold(d_grain: f64) -> Result<f64> {
    if !(d_grain > 0.0) {
        return Err(Error::Domain {
            name: "d_grain",
            value: d_grain,
            domain: "(0, ∞) m".into(),
        });
    }
    Ok((2.0 * d_grain * GRAVITY).sqrt())
}

/// Steady-intrusion force on a depth × speed grid: `surface[i][j]` is the
/// force at `depths[i]`, `speeds[j]` with z̈ = 0.
pub fn force_map(params: &TerrainParams, depths: &[f64], speeds: &[f64]) -> Result<Vec<Vec<f64>>> {
    if depths.is_empty() || speeds.is_empty() {
        return Err(Error::Empty("force map grids".into()));
    }
    check_grid("depth", depths)?;
    check_grid("speed", speeds)?;
    Ok(depths
        .iter()
        .map(|&z| {
            speeds
                .iter()
                .map(|&v| terrain_force(z, v, 0.0, params).f_total)
                .collect()
        })
        .collect())
}

fn check_grid(name: &'static str, grid: &[f64]) -> Result<()> {
    for (i, &g) in grid.iter().enumerate() {
        if !(g >= 0.0) || (i > 0 && g < grid[i - 1]) {
            return Err(Error::Domain {
                name,
                value: g,
                domain: "ascending, nonnegative grid".into(),
            });
        }
    }
    Ok(())
}
