//! Constant-speed intrusion rig: the foot is driven kinematically into the
//! bed while a load cell records the resistive force.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::{terrain_force, TerrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrusionConfig {
    /// Maximum intrusion depth [m].
    pub z_max: f64,
    pub sample_period: f64,
    /// Load-cell noise [N]; 0 gives the exact law.
    pub loadcell_sigma: f64,
}

impl Default for IntrusionConfig {
    fn default() -> Self {
        Self {
            z_max: 0.05,
            sample_period: 1e-3,
            loadcell_sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrusionSample {
    pub t: f64,
    pub depth: f64,
    pub speed: f64,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionLog {
    pub speed: f64,
    pub samples: Vec<IntrusionSample>,
}

/// Drive the foot at `speed` from the surface down to `config.z_max`.
/// The final sample sits exactly at `z_max`.
pub fn run_constant_speed_intrusion(
    speed: f64,
    config: &IntrusionConfig,
    terrain: &TerrainParams,
    seed: u64,
) -> Result<IntrusionLog> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::Domain {
            name: "intrusion speed",
            value: speed,
            domain: "(0, ∞) m/s".into(),
        });
    }
    if !(config.z_max > 0.0 && config.sample_period > 0.0 && config.loadcell_sigma >= 0.0) {
        return Err(Error::Config(
            "intrusion: z_max and sample_period must be positive, loadcell_sigma nonnegative".into(),
        ));
    }
    terrain.validate()?;
    let noise = Normal::new(0.0, config.loadcell_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |t: f64, depth: f64| IntrusionSample {
        t,
        depth,
        speed,
        force: terrain_force(depth, speed, 0.0, terrain).f_total + noise.sample(&mut rng),
    };

    let t_end = config.z_max / speed;
    let mut samples = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * config.sample_period;
        if t >= t_end {
            break;
        }
        samples.push(sample(t, speed * t));
        k += 1;
    }
    samples.push(sample(t_end, config.z_max));
    Ok(IntrusionLog { speed, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{added_mass_profile, inertial_threshold};
    use approx::assert_relative_eq;

    fn exact() -> IntrusionConfig {
        IntrusionConfig {
            loadcell_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn slowest_rig_condition_endpoint_force() {
        let p = TerrainParams::default();
        let log = run_constant_speed_intrusion(0.022, &exact(), &p, 0).unwrap();
        let last = log.samples.last().unwrap();
        assert_eq!(last.depth, 0.05);
        // independent closed form: k·z + (m∞/z_c)·e^(−z/z_c)·v²
        let expect = 800.0 * 0.05 + 0.15 / 0.015 * (-0.05f64 / 0.015).exp() * 0.022 * 0.022;
        assert_relative_eq!(last.force, expect, epsilon = 1e-12);
        assert!(log.samples.windows(2).all(|w| w[1].depth > w[0].depth));
        assert!(log.samples.iter().all(|s| s.speed == 0.022));
    }

    #[test]
    fn subthreshold_drag_is_negligible() {
        let p = TerrainParams::default();
        let v = 0.9 * inertial_threshold(p.d_grain).unwrap();
        let (_, grad) = added_mass_profile(0.02, &p);
        let drag = grad * v * v;
        assert!(drag < 0.01 * p.k_stiff * 0.02);
    }

    #[test]
    fn repeatable_for_a_seed() {
        let p = TerrainParams::default();
        let cfg = IntrusionConfig::default();
        let a = run_constant_speed_intrusion(0.5, &cfg, &p, 42).unwrap();
        let b = run_constant_speed_intrusion(0.5, &cfg, &p, 42).unwrap();
        assert_eq!(a, b);
        let c = run_constant_speed_intrusion(0.5, &cfg, &p, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = TerrainParams::default();
        assert!(run_constant_speed_intrusion(0.0, &exact(), &p, 0).is_err());
        let cfg = IntrusionConfig { z_max: -1.0, ..exact() };
        assert!(run_constant_speed_intrusion(0.1, &cfg, &p, 0).is_err());
    }
}
