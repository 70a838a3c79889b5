//! Stance-window regression samples from an estimate series.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ForceSource, RegressionSample};
use crate::error::{Error, Result};
use crate::estimation::ForceEstimateSeries;
use crate::simulator::StrideEvents;
use crate::terrain::{penetration_depth, TerrainParams};

/// Where depth and its derivatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KinematicsSource {
    /// Kalman foot height; rate and acceleration by local-quadratic
    /// differentiation of the Kalman foot velocity.
    Estimated,
    /// Kalman foot height and velocity; acceleration straight from the
    /// foot IMU.
    Measured,
    /// Simulator truth columns.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub source: ForceSource,
    pub kinematics: KinematicsSource,
    /// Half-width of the differentiation window in samples (window = 2h+1).
    pub half_width: usize,
}

impl WindowPolicy {
    pub fn new(source: ForceSource) -> Self {
        Self {
            source,
            kinematics: KinematicsSource::Estimated,
            half_width: 5,
        }
    }
}

/// Value and slope of a local least-squares quadratic through the
/// `2·half_width + 1` samples centred on each index (clipped at the ends).
pub fn local_quadratic_derivative(t: &[f64], y: &[f64], half_width: usize) -> Result<Vec<(f64, f64)>> {
    if t.len() != y.len() {
        return Err(Error::Config("time and value series differ in length".into()));
    }
    let n = t.len();
    if n < 3 {
        return Err(Error::Empty("need at least three samples to differentiate".into()));
    }
    let h = half_width.max(1);
    (0..n)
        .map(|i| {
            // shift the window inward at the ends so it keeps its size
            let width = (2 * h + 1).min(n);
            let lo = i.saturating_sub(h).min(n - width);
            let span = (t[lo + width - 1] - t[lo]).abs().max(f64::MIN_POSITIVE);
            let mut ata = Matrix3::zeros();
            let mut aty = Vector3::zeros();
            for j in lo..lo + width {
                let d = (t[j] - t[i]) / span;
                let row = Vector3::new(1.0, d, d * d);
                ata += row * row.transpose();
                aty += row * y[j];
            }
            let c = ata
                .lu()
                .solve(&aty)
                .ok_or_else(|| Error::Numeric(format!("singular local fit at sample {i}")))?;
            Ok((c[0], c[1] / span))
        })
        .collect()
}

/// Samples between touchdown and liftoff with positive depth.
pub fn extract_samples(
    series: &ForceEstimateSeries,
    events: &StrideEvents,
    terrain: &TerrainParams,
    policy: &WindowPolicy,
) -> Result<Vec<RegressionSample>> {
    if !(events.t_td < events.t_lo) {
        return Err(Error::TrialMalformed("touchdown does not precede liftoff".into()));
    }
    let rows = &series.rows;
    let kin: Vec<(f64, f64, f64)> = match policy.kinematics {
        KinematicsSource::Truth => rows
            .iter()
            .map(|r| {
                let tr = r
                    .truth
                    .ok_or_else(|| Error::TrialMalformed("truth kinematics requested but absent".into()))?;
                Ok((penetration_depth(tr.x_f, terrain), -tr.v_f, -tr.a_f))
            })
            .collect::<Result<_>>()?,
        KinematicsSource::Measured => rows
            .iter()
            .map(|r| (penetration_depth(r.x_f_hat, terrain), -r.v_f_hat, -r.a_f_meas))
            .collect(),
        KinematicsSource::Estimated => {
            let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
            let v: Vec<f64> = rows.iter().map(|r| r.v_f_hat).collect();
            let d = local_quadratic_derivative(&t, &v, policy.half_width)?;
            rows.iter()
                .zip(d)
                .map(|(r, (v, a))| (penetration_depth(r.x_f_hat, terrain), -v, -a))
                .collect()
        }
    };
    // frame times are multiples of the sensor period; allow rounding slack
    let eps = 1e-9;
    let out: Vec<RegressionSample> = rows
        .iter()
        .zip(kin)
        .filter(|(r, (z, _, _))| r.t >= events.t_td - eps && r.t <= events.t_lo + eps && *z > 0.0)
        .filter_map(|(r, (z, z_dot, z_ddot))| {
            let f = match policy.source {
                ForceSource::QuasiStatic => r.f_qs?,
                ForceSource::Observer => r.f_mo,
                ForceSource::Loadcell => r.f_loadcell,
            };
            Some(RegressionSample {
                z,
                z_dot,
                z_ddot,
                f,
                t: r.t,
                source: policy.source,
            })
        })
        .collect();
    if out.is_empty() {
        return Err(Error::Empty("no penetrating samples in the stance window".into()));
    }
    Ok(out)
}
