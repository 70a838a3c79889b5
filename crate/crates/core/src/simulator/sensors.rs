//! Proprioceptive sensor model sampled at the logging rate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TruthSample;
use crate::error::{Error, Result};

/// One synchronized proprioceptive sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t: f64,
    /// [rad]
    pub encoder_theta: f64,
    /// Drive-reported joint rate [rad/s].
    pub encoder_theta_dot: f64,
    /// [m/s²]
    pub imu_body_acc: f64,
    /// [m/s²]
    pub imu_foot_acc: f64,
    /// Body height [m].
    pub tof_height: f64,
    /// Per-motor current [A].
    pub motor_current: f64,
    /// Foot-terrain force [N].
    pub loadcell_force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Encoder quantization step [rad]; 0 disables quantization.
    pub encoder_resolution: f64,
    pub encoder_sigma: f64,
    pub encoder_rate_sigma: f64,
    pub imu_sigma: f64,
    /// Per-trial IMU bias is drawn uniformly from ±imu_bias_max.
    pub imu_bias_max: f64,
    pub tof_sigma: f64,
    pub current_sigma: f64,
    pub loadcell_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            encoder_resolution: 2.0 * std::f64::consts::PI / 4096.0,
            encoder_sigma: 1e-3,
            encoder_rate_sigma: 0.3,
            imu_sigma: 0.2,
            imu_bias_max: 0.05,
            tof_sigma: 5e-3,
            current_sigma: 0.05,
            loadcell_sigma: 0.5,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            encoder_resolution: 0.0,
            encoder_sigma: 0.0,
            encoder_rate_sigma: 0.0,
            imu_sigma: 0.0,
            imu_bias_max: 0.0,
            tof_sigma: 0.0,
            current_sigma: 0.0,
            loadcell_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.encoder_resolution,
            self.encoder_sigma,
            self.encoder_rate_sigma,
            self.imu_sigma,
            self.imu_bias_max,
            self.tof_sigma,
            self.current_sigma,
            self.loadcell_sigma,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(
                "noise: all entries must be finite and nonnegative".into(),
            ))
        }
    }
}

/// Constant accelerometer offsets for one trial [m/s²].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ImuBias {
    pub body: f64,
    pub foot: f64,
}

impl ImuBias {
    pub fn draw<R: Rng>(noise: &NoiseConfig, rng: &mut R) -> Self {
        let mut one = || {
            if noise.imu_bias_max > 0.0 {
                rng.random_range(-noise.imu_bias_max..=noise.imu_bias_max)
            } else {
                0.0
            }
        };
        Self {
            body: one(),
            foot: one(),
        }
    }
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    // Always consume a draw so the stream layout does not depend on which
    // channels are enabled.
    let n: f64 = rng.sample(StandardNormal);
    sigma * n
}

fn quantize(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        (x / step).round() * step
    } else {
        x
    }
}

/// Corrupt one truth sample into a sensor frame.
pub fn sample_sensors<R: Rng>(
    truth: &TruthSample,
    noise: &NoiseConfig,
    bias: &ImuBias,
    torque_constant: f64,
    rng: &mut R,
) -> SensorFrame {
    let s = &truth.state;
    SensorFrame {
        t: s.t,
        encoder_theta: quantize(s.theta, noise.encoder_resolution) + gauss(rng, noise.encoder_sigma),
        encoder_theta_dot: s.theta_dot + gauss(rng, noise.encoder_rate_sigma),
        imu_body_acc: truth.accel_body + bias.body + gauss(rng, noise.imu_sigma),
        imu_foot_acc: truth.accel_foot + bias.foot + gauss(rng, noise.imu_sigma),
        tof_height: s.x_b + gauss(rng, noise.tof_sigma),
        motor_current: truth.tau / torque_constant + gauss(rng, noise.current_sigma),
        loadcell_force: truth.force.f_total + gauss(rng, noise.loadcell_sigma),
    }
}
