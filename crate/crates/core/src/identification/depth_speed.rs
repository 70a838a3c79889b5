//! Depth-speed force surface from constant-speed intrusions, and the
//! added-mass contribution it implies during a hop.

use serde::{Deserialize, Serialize};

use super::RegressionSample;
use crate::error::{Error, Result};
use crate::simulator::IntrusionLog;

/// `F = k·z + g(z)·v²` with `g(z) = (m_∞/z_c)·e^(−z/z_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSpeedFit {
    /// [N/m]
    pub k_fit: f64,
    /// [kg]
    pub m_a_inf_fit: f64,
    /// [m]
    pub z_c_fit: f64,
    /// [N]
    pub rmse: f64,
    /// [N]
    pub max_abs_residual: f64,
    pub n_samples: usize,
}

impl DepthSpeedFit {
    /// Fitted added-mass gradient dm_a/dz [kg/m].
    pub fn gradient(&self, z: f64) -> f64 {
        self.m_a_inf_fit / self.z_c_fit * (-z.max(0.0) / self.z_c_fit).exp()
    }

    /// Added mass at depth `z` from trapezoid integration of the gradient [kg].
    pub fn added_mass(&self, z: f64) -> f64 {
        const PANELS: usize = 2000;
        let z = z.max(0.0);
        if z == 0.0 {
            return 0.0;
        }
        let h = z / PANELS as f64;
        let inner: f64 = (1..PANELS).map(|i| self.gradient(i as f64 * h)).sum();
        h * (0.5 * (self.gradient(0.0) + self.gradient(z)) + inner)
    }

    /// Steady-intrusion force prediction [N].
    pub fn force(&self, z: f64, v: f64) -> f64 {
        self.k_fit * z + self.gradient(z) * v * v
    }
}

struct Point {
    z: f64,
    v2: f64,
    f: f64,
}

/// Linear LS for `(k, m)` at fixed `z_c`, returning `(k, m, sse)`.
fn inner_fit(points: &[Point], z_c: f64) -> Option<(f64, f64, f64)> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x2 = (-p.z / z_c).exp() / z_c * p.v2;
        a11 += p.z * p.z;
        a12 += p.z * x2;
        a22 += x2 * x2;
        b1 += p.z * p.f;
        b2 += x2 * p.f;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det > 1e-14 * a11 * a22) {
        return None;
    }
    let k = (b1 * a22 - a12 * b2) / det;
    let m = (a11 * b2 - a12 * b1) / det;
    let sse = points
        .iter()
        .map(|p| (p.f - k * p.z - m * (-p.z / z_c).exp() / z_c * p.v2).powi(2))
        .sum();
    Some((k, m, sse))
}

/// Fit the steady-intrusion law to a set of constant-speed logs: linear
/// least squares in `(k, m_∞)` profiled over `z_c`.
pub fn fit_depth_speed_model(logs: &[IntrusionLog]) -> Result<DepthSpeedFit> {
    let mut speeds: Vec<f64> = logs.iter().map(|l| l.speed).collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    if speeds.len() < 2 || !speeds.iter().any(|&v| v > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "need at least two distinct nonzero intrusion speeds, got {}",
            speeds.len()
        )));
    }
    let points: Vec<Point> = logs
        .iter()
        .flat_map(|l| l.samples.iter())
        .filter(|s| s.depth > 0.0)
        .map(|s| Point {
            z: s.depth,
            v2: s.speed * s.speed,
            f: s.force,
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::DegenerateFit("fewer than three penetrating samples".into()));
    }
    let z_max = points.iter().map(|p| p.z).fold(0.0, f64::max);

    // coarse log-spaced scan, then golden-section refinement in log z_c
    let sse = |log_zc: f64| inner_fit(&points, log_zc.exp()).map_or(f64::INFINITY, |r| r.2);
    let (lo, hi) = ((z_max * 1e-3).ln(), (z_max * 1e2).ln());
    let n = 200;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let best = (0..=n)
        .min_by(|&a, &b| sse(grid[a]).total_cmp(&sse(grid[b])))
        .expect("nonempty grid");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = sse(d);
        }
    }
    let z_c = (0.5 * (a + b)).exp();
    let (k, m, _) =
        inner_fit(&points, z_c).ok_or_else(|| Error::DegenerateFit("depth-speed design is singular".into()))?;
    if !(k > 0.0) {
        return Err(Error::DegenerateFit(format!("fitted stiffness {k} is not positive")));
    }
    let mut fit = DepthSpeedFit {
        k_fit: k,
        m_a_inf_fit: m,
        z_c_fit: z_c,
        rmse: 0.0,
        max_abs_residual: 0.0,
        n_samples: points.len(),
    };
    let (mut sq, mut worst) = (0.0, 0.0f64);
    for p in &points {
        let r = p.f - fit.force(p.z, p.v2.sqrt());
        sq += r * r;
        worst = worst.max(r.abs());
    }
    fit.rmse = (sq / points.len() as f64).sqrt();
    fit.max_abs_residual = worst;
    Ok(fit)
}

/// Acceleration-induced force predicted by the fitted model next to what is
/// left of the measured force once the static and velocity terms are removed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Reconstruction {
    pub t: Vec<f64>,
    /// `m_a(z)·z̈` [N].
    pub predicted: Vec<f64>,
    /// `F − k·z − g(z)·ż²` [N].
    pub residual: Vec<f64>,
}

/// Compare the inertial term implied by `fit` with the force residual on
/// stance samples. The velocity and inertial terms only act while the foot
/// is penetrating (ż ≥ 0), matching the reaction law.
pub fn added_mass_reconstruction(fit: &DepthSpeedFit, samples: &[RegressionSample]) -> Reconstruction {
    let mut out = Reconstruction::default();
    for s in samples {
        let penetrating = s.z_dot >= 0.0;
        let drag = if penetrating {
            fit.gradient(s.z) * s.z_dot * s.z_dot
        } else {
            0.0
        };
        out.t.push(s.t);
        out.predicted.push(if penetrating {
            fit.added_mass(s.z) * s.z_ddot
        } else {
            0.0
        });
        out.residual.push(s.f - fit.k_fit * s.z - drag);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identification::ForceSource;
    use crate::simulator::{run_constant_speed_intrusion, IntrusionConfig, IntrusionSample};
    use crate::terrain::{added_mass_profile, TerrainParams};
    use approx::assert_relative_eq;

    fn sweep(terrain: &TerrainParams, speeds: &[f64], sigma: f64) -> Vec<IntrusionLog> {
        let cfg = IntrusionConfig {
            loadcell_sigma: sigma,
            ..Default::default()
        };
        speeds
            .iter()
            .enumerate()
            .map(|(i, &v)| run_constant_speed_intrusion(v, &cfg, terrain, i as u64).unwrap())
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn recovers_noise_free_law() {
        let t = TerrainParams::default();
        let speeds: Vec<f64> = (0..50).map(|i| 0.022 + i as f64 * (1.1 - 0.022) / 49.0).collect();
        let fit = fit_depth_speed_model(&sweep(&t, &speeds, 0.0)).unwrap();
        assert!(rel(fit.k_fit, t.k_stiff) < 1e-6, "{fit:?}");
        assert!(rel(fit.m_a_inf_fit, t.m_a_inf) < 1e-6, "{fit:?}");
        assert!(rel(fit.z_c_fit, t.z_c) < 1e-6, "{fit:?}");
        assert!(fit.rmse < 1e-9);
    }

    #[test]
    fn recovers_other_beds() {
        let t = TerrainParams {
            k_stiff: 1500.0,
            m_a_inf: 0.4,
            z_c: 0.008,
            ..Default::default()
        };
        let fit = fit_depth_speed_model(&sweep(&t, &[0.1, 0.4, 0.8, 1.2], 0.0)).unwrap();
        assert!(rel(fit.k_fit, 1500.0) < 1e-6);
        assert!(rel(fit.m_a_inf_fit, 0.4) < 1e-6);
        assert!(rel(fit.z_c_fit, 0.008) < 1e-6);
    }

    #[test]
    fn needs_speed_diversity() {
        let t = TerrainParams::default();
        let logs = sweep(&t, &[0.5, 0.5, 0.5], 0.0);
        assert!(matches!(fit_depth_speed_model(&logs), Err(Error::DegenerateFit(_))));
        assert!(fit_depth_speed_model(&[]).is_err());
    }

    #[test]
    fn zero_speed_rows_only_inform_stiffness() {
        // a quasi-static sweep has F = k·z exactly
        let t = TerrainParams::default();
        let static_log = IntrusionLog {
            speed: 0.0,
            samples: (1..=50)
                .map(|i| {
                    let z = i as f64 * 1e-3;
                    IntrusionSample {
                        t: 0.0,
                        depth: z,
                        speed: 0.0,
                        force: t.k_stiff * z,
                    }
                })
                .collect(),
        };
        let mut logs = sweep(&t, &[0.3, 0.9], 0.0);
        logs.push(static_log.clone());
        let fit = fit_depth_speed_model(&logs).unwrap();
        assert!(rel(fit.k_fit, t.k_stiff) < 1e-6);
        for s in &static_log.samples {
            assert_relative_eq!(fit.force(s.depth, 0.0), fit.k_fit * s.depth);
        }
    }

    #[test]
    fn trapezoid_added_mass_matches_closed_form() {
        let t = TerrainParams::default();
        let fit = DepthSpeedFit {
            k_fit: t.k_stiff,
            m_a_inf_fit: t.m_a_inf,
            z_c_fit: t.z_c,
            rmse: 0.0,
            max_abs_residual: 0.0,
            n_samples: 0,
        };
        for z in [0.0, 1e-3, 0.01, 0.03, 0.1] {
            assert_relative_eq!(fit.added_mass(z), added_mass_profile(z, &t).0, epsilon = 1e-6);
        }
    }

    #[test]
    fn reconstruction_splits_terms() {
        let fit = DepthSpeedFit {
            k_fit: 800.0,
            m_a_inf_fit: 0.15,
            z_c_fit: 0.015,
            rmse: 0.0,
            max_abs_residual: 0.0,
            n_samples: 0,
        };
        let mk = |z: f64, zd: f64, zdd: f64, f: f64| RegressionSample {
            z,
            z_dot: zd,
            z_ddot: zdd,
            f,
            t: 0.0,
            source: ForceSource::Loadcell,
        };
        // constant-speed sample: no inertial contribution
        let z = 0.01;
        let s = mk(z, 0.5, 0.0, fit.force(z, 0.5));
        let r = added_mass_reconstruction(&fit, &[s]);
        assert_eq!(r.predicted[0], 0.0);
        assert!(r.residual[0].abs() < 1e-12);
        // decelerating sample: residual carries m_a·z̈
        let f = fit.force(z, 0.5) + fit.added_mass(z) * -30.0;
        let r = added_mass_reconstruction(&fit, &[mk(z, 0.5, -30.0, f)]);
        assert_relative_eq!(r.residual[0], r.predicted[0], epsilon = 1e-12);
        // withdrawal: only the static term is modelled
        let r = added_mass_reconstruction(&fit, &[mk(z, -0.2, 5.0, 8.0)]);
        assert_eq!(r.predicted[0], 0.0);
        assert!(r.residual[0].abs() < 1e-12);
    }
}
