//! Onboard-style estimation: Kalman-filtered kinematics feeding a momentum
//! observer, next to the quasi-static Jacobian baseline.

mod kalman;
mod observer;

pub use kalman::{kf_step, kf_update, measurement_matrix, transition, KalmanConfig, KalmanState, KinematicEstimate};
pub use observer::{mo_step, psi, ObserverState};

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkage::{quasi_static_force, theta_for_length, Geometry, LinkageParams};
use crate::simulator::{NoiseConfig, SensorFrame, TrialLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    /// Backward difference of the encoder angle, averaged over `rate_window`.
    Differenced,
    /// The drive-reported rate channel.
    Reported,
}

/// Which kinematics drive the momentum observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverInputs {
    /// Raw encoder angle/rate with Kalman foot velocity.
    Estimated,
    /// Ground-truth kinematics and torque (simulation only).
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Observer gain [1/s].
    pub k_obs: f64,
    /// Acceleration noise used to build Q [m/s²].
    pub process_accel_sigma: f64,
    /// Diagonal of the initial covariance.
    pub p0_diag: f64,
    pub rate_window: usize,
    pub rate_source: RateSource,
    /// Lower bound on every R entry so noiseless runs stay well posed.
    pub measurement_floor: f64,
    pub observer_inputs: ObserverInputs,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            k_obs: 200.0,
            process_accel_sigma: 1.0,
            p0_diag: 1e-2,
            rate_window: 5,
            rate_source: RateSource::Differenced,
            measurement_floor: 1e-12,
            observer_inputs: ObserverInputs::Estimated,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_obs > 0.0 && self.process_accel_sigma >= 0.0 && self.p0_diag > 0.0) {
            return Err(Error::Config(
                "estimation: k_obs and p0_diag must be positive, process_accel_sigma nonnegative".into(),
            ));
        }
        if self.rate_window == 0 || !(self.measurement_floor > 0.0) {
            return Err(Error::Config(
                "estimation: rate_window and measurement_floor must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Kalman tuning for sensor period `dt`; the encoder channels are scaled
    /// by |dL/dθ| at `nominal_theta`.
    pub fn kalman_config(
        &self,
        noise: &NoiseConfig,
        linkage: &LinkageParams,
        nominal_theta: f64,
        dt: f64,
    ) -> KalmanConfig {
        let j = Geometry::at(nominal_theta, linkage).jacobian.abs();
        let angle_var = noise.encoder_sigma.powi(2) + noise.encoder_resolution.powi(2) / 12.0;
        let rate_sigma = match self.rate_source {
            RateSource::Differenced => (2.0 * angle_var).sqrt() / (self.rate_window as f64 * dt),
            RateSource::Reported => noise.encoder_rate_sigma,
        };
        let floor = self.measurement_floor;
        KalmanConfig {
            q: KalmanConfig::white_acceleration_q(self.process_accel_sigma, dt),
            r: Matrix3::from_diagonal(&Vector3::new(
                noise.tof_sigma.powi(2).max(floor),
                (j * j * angle_var).max(floor),
                (j * rate_sigma).powi(2).max(floor),
            )),
            p0: Matrix4::identity() * self.p0_diag,
            x0: None,
        }
    }
}

/// Backward-difference joint rate averaged over the last `window` intervals.
pub fn encoder_rate(frames: &[SensorFrame], window: usize) -> Vec<f64> {
    (0..frames.len())
        .map(|k| {
            let w = window.min(k);
            if w == 0 {
                0.0
            } else {
                (frames[k].encoder_theta - frames[k - w].encoder_theta) / (frames[k].t - frames[k - w].t)
            }
        })
        .collect()
}

/// Per-frame Jacobian force estimate from motor current; `None` marks a
/// frame whose encoder angle sits at the extension singularity.
pub fn quasi_static_series(frames: &[SensorFrame], linkage: &LinkageParams) -> Result<Vec<Option<f64>>> {
    if frames.is_empty() {
        return Err(Error::Empty("sensor frames".into()));
    }
    Ok(frames
        .iter()
        .map(|f| quasi_static_force(linkage.torque_constant * f.motor_current, f.encoder_theta, linkage).ok())
        .collect())
}

/// Ground-truth columns aligned with one sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthColumns {
    pub x_b: f64,
    pub v_b: f64,
    pub x_f: f64,
    pub v_f: f64,
    pub a_f: f64,
    pub f_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub t: f64,
    pub x_b_hat: f64,
    pub v_b_hat: f64,
    pub x_f_hat: f64,
    pub v_f_hat: f64,
    pub f_qs: Option<f64>,
    pub f_mo: f64,
    pub f_loadcell: f64,
    /// Foot IMU reading [m/s²].
    pub a_f_meas: f64,
    pub truth: Option<TruthColumns>,
}

/// Time-aligned kinematic and contact-force estimates for one trial.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceEstimateSeries {
    pub rows: Vec<EstimateRow>,
}

impl ForceEstimateSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Run the Kalman filter, observer and quasi-static map over a frame log.
/// `truth` (one entry per frame) is attached to the output when given and
/// is also what drives the observer under [`ObserverInputs::Truth`].
pub fn estimate_frames(
    frames: &[SensorFrame],
    truth: Option<&[ObserverTruth]>,
    linkage: &LinkageParams,
    noise: &NoiseConfig,
    nominal_leg_length: f64,
    config: &EstimationConfig,
) -> Result<ForceEstimateSeries> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(Error::Empty("need at least two sensor frames".into()));
    }
    if let Some(tr) = truth {
        if tr.len() != frames.len() {
            return Err(Error::Config("truth and frame sequences differ in length".into()));
        }
    }
    if config.observer_inputs == ObserverInputs::Truth && truth.is_none() {
        return Err(Error::Config("truth observer inputs requested without truth".into()));
    }
    let dt = frames[1].t - frames[0].t;
    let nominal_theta = theta_for_length(nominal_leg_length, linkage)?;
    let kcfg = config.kalman_config(noise, linkage, nominal_theta, dt);
    kcfg.validate()?;

    let rates = match config.rate_source {
        RateSource::Differenced => encoder_rate(frames, config.rate_window),
        RateSource::Reported => frames.iter().map(|f| f.encoder_theta_dot).collect(),
    };
    let qs = quasi_static_series(frames, linkage)?;
    let measurement = |k: usize| {
        let f = &frames[k];
        let g = Geometry::at(f.encoder_theta, linkage);
        Vector3::new(f.tof_height, g.length + linkage.mount_offset, g.jacobian * rates[k])
    };

    let z0 = measurement(0);
    let x0 = kcfg.x0.unwrap_or_else(|| Vector4::new(z0[0], 0.0, z0[0] - z0[1], 0.0));
    let mut kf = kf_update(x0, kcfg.p0, z0, &kcfg)?;
    kf.t = frames[0].t;

    let observer_input = |k: usize, kf: &KalmanState| match (config.observer_inputs, truth) {
        (ObserverInputs::Truth, Some(tr)) => (tr[k].theta, tr[k].theta_dot, tr[k].v_f, tr[k].tau),
        _ => (
            frames[k].encoder_theta,
            rates[k],
            kf.x_hat[3],
            linkage.torque_constant * frames[k].motor_current,
        ),
    };
    let (th0, _, v0, _) = observer_input(0, &kf);
    let mut mo = ObserverState::new(config.k_obs, th0, v0, linkage)?;

    let mut rows = Vec::with_capacity(frames.len());
    for k in 0..frames.len() {
        if k > 0 {
            let step = frames[k].t - frames[k - 1].t;
            let u = Vector2::new(
                0.5 * (frames[k - 1].imu_body_acc + frames[k].imu_body_acc),
                0.5 * (frames[k - 1].imu_foot_acc + frames[k].imu_foot_acc),
            );
            kf = kf_step(&kf, u, measurement(k), step, &kcfg)?;
            let (th, thd, vf, tau) = observer_input(k, &kf);
            mo = mo_step(&mo, th, thd, vf, tau, step, linkage)?;
        }
        let est = kf.estimate();
        rows.push(EstimateRow {
            t: frames[k].t,
            x_b_hat: est.x_b,
            v_b_hat: est.v_b,
            x_f_hat: est.x_f,
            v_f_hat: est.v_f,
            f_qs: qs[k],
            f_mo: mo.r,
            f_loadcell: frames[k].loadcell_force,
            a_f_meas: frames[k].imu_foot_acc,
            truth: truth.map(|tr| tr[k].columns),
        });
    }
    Ok(ForceEstimateSeries { rows })
}

/// Truth needed alongside each frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverTruth {
    pub theta: f64,
    pub theta_dot: f64,
    pub v_f: f64,
    pub tau: f64,
    pub columns: TruthColumns,
}

/// Truth entries aligned with the frames of a trial log.
pub fn frame_truth(log: &TrialLog) -> Result<Vec<ObserverTruth>> {
    let decim = log.config.sim.decimation()?;
    (0..log.frames.len())
        .map(|k| {
            let s = log
                .truth
                .get(k * decim)
                .ok_or_else(|| Error::TrialMalformed("truth log shorter than frame log".into()))?;
            Ok(ObserverTruth {
                theta: s.state.theta,
                theta_dot: s.state.theta_dot,
                v_f: s.state.v_f,
                tau: s.tau,
                columns: TruthColumns {
                    x_b: s.state.x_b,
                    v_b: s.state.v_b,
                    x_f: s.state.x_f,
                    v_f: s.state.v_f,
                    a_f: s.accel_foot,
                    f_c: s.force.f_total,
                },
            })
        })
        .collect()
}

/// [`estimate_frames`] on a simulated trial, with truth columns attached.
pub fn estimate_trial(log: &TrialLog, config: &EstimationConfig) -> Result<ForceEstimateSeries> {
    let truth = frame_truth(log)?;
    estimate_frames(
        &log.frames,
        Some(&truth),
        &log.config.linkage,
        &log.config.noise,
        log.config.controller.l0_compress,
        config,
    )
}

/// Observer residual driven by exact kinematics at the integration rate,
/// one value per truth sample. The torque of each step is the one held
/// over it.
pub fn observer_on_truth(log: &TrialLog, k_obs: f64) -> Result<Vec<f64>> {
    let linkage = &log.config.linkage;
    let first = log
        .truth
        .first()
        .ok_or_else(|| Error::Empty("empty truth log".into()))?;
    let mut mo = ObserverState::new(k_obs, first.state.theta, first.state.v_f, linkage)?;
    let mut out = Vec::with_capacity(log.truth.len());
    out.push(mo.r);
    for w in log.truth.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        mo = mo_step(
            &mo,
            b.state.theta,
            b.state.theta_dot,
            b.state.v_f,
            a.tau,
            b.state.t - a.state.t,
            linkage,
        )?;
        out.push(mo.r);
    }
    Ok(out)
}
