//! Discrete Kalman filter over `[x_b, ẋ_b, x_f, ẋ_f]`, driven by the two
//! IMU accelerations and corrected by ToF height plus the encoder-derived
//! body-foot displacement and rate.

use nalgebra::{Matrix2x4, Matrix3, Matrix3x4, Matrix4, Matrix4x2, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanConfig {
    /// Process noise covariance for one step.
    pub q: Matrix4<f64>,
    /// Measurement noise covariance.
    pub r: Matrix3<f64>,
    pub p0: Matrix4<f64>,
    /// Initial state; `None` lets the caller initialize from the first
    /// measurement.
    pub x0: Option<Vector4<f64>>,
}

impl KalmanConfig {
    /// White-acceleration discretization: each channel gets
    /// `σ²·[dt⁴/4, dt³/2; dt³/2, dt²]`.
    #[rustfmt::skip]
    pub fn white_acceleration_q(accel_sigma: f64, dt: f64) -> Matrix4<f64> {
        let g = Matrix4x2::new(
            0.5 * dt * dt, 0.0,
            dt, 0.0,
            0.0, 0.5 * dt * dt,
            0.0, dt,
        );
        g * g.transpose() * (accel_sigma * accel_sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let sym4 = |m: &Matrix4<f64>| (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
        if !sym4(&self.q) || !sym4(&self.p0) || (self.r - self.r.transpose()).amax() > 1e-12 * self.r.amax().max(1.0) {
            return Err(Error::Config("kalman: Q, R and P0 must be symmetric".into()));
        }
        let min_eig4 = |m: &Matrix4<f64>| m.symmetric_eigenvalues().min();
        if min_eig4(&self.q) < -1e-15 || min_eig4(&self.p0) < -1e-15 {
            return Err(Error::Config("kalman: Q and P0 must be positive semidefinite".into()));
        }
        if self.r.symmetric_eigenvalues().min() <= 0.0 {
            return Err(Error::Config("kalman: R must be positive definite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub x_hat: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicEstimate {
    pub x_b: f64,
    pub v_b: f64,
    pub x_f: f64,
    pub v_f: f64,
}

impl KalmanState {
    pub fn estimate(&self) -> KinematicEstimate {
        KinematicEstimate {
            x_b: self.x_hat[0],
            v_b: self.x_hat[1],
            x_f: self.x_hat[2],
            v_f: self.x_hat[3],
        }
    }
}

#[rustfmt::skip]
pub fn transition(dt: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let a = Matrix4::new(
        1.0, dt, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, dt,
        0.0, 0.0, 0.0, 1.0,
    );
    let b = Matrix2x4::new(
        0.5 * dt * dt, dt, 0.0, 0.0,
        0.0, 0.0, 0.5 * dt * dt, dt,
    )
    .transpose();
    (a, b)
}

#[rustfmt::skip]
pub fn measurement_matrix() -> Matrix3x4<f64> {
    Matrix3x4::new(
        1.0, 0.0, 0.0, 0.0,
        1.0, 0.0, -1.0, 0.0,
        0.0, 1.0, 0.0, -1.0,
    )
}

/// Predict over `dt` with accelerations `u = (a_b, a_f)`, then correct with
/// `z = (tof height, x_b − x_f, ẋ_b − ẋ_f)`. Uses the Joseph form and
/// re-symmetrizes P.
pub fn kf_step(
    state: &KalmanState,
    u: Vector2<f64>,
    z: Vector3<f64>,
    dt: f64,
    config: &KalmanConfig,
) -> Result<KalmanState> {
    if !(dt > 0.0) {
        return Err(Error::Domain {
            name: "dt",
            value: dt,
            domain: "(0, ∞) s".into(),
        });
    }
    let (a, b) = transition(dt);
    let x_pred = a * state.x_hat + b * u;
    let p_pred = a * state.p * a.transpose() + config.q;
    let mut out = kf_update(x_pred, p_pred, z, config)?;
    out.t = state.t + dt;
    Ok(out)
}

/// Measurement update only.
pub fn kf_update(
    x_pred: Vector4<f64>,
    p_pred: Matrix4<f64>,
    z: Vector3<f64>,
    config: &KalmanConfig,
) -> Result<KalmanState> {
    let h = measurement_matrix();
    let s = h * p_pred * h.transpose() + config.r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Numeric("innovation covariance is singular".into()))?;
    let gain = p_pred * h.transpose() * s_inv;
    let x = x_pred + gain * (z - h * x_pred);
    let ikh = Matrix4::identity() - gain * h;
    let p = ikh * p_pred * ikh.transpose() + gain * config.r * gain.transpose();
    let p = 0.5 * (p + p.transpose());
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite Kalman state".into()));
    }
    Ok(KalmanState { x_hat: x, p, t: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GRAVITY;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact_config(x0: Vector4<f64>) -> KalmanConfig {
        KalmanConfig {
            q: Matrix4::zeros(),
            r: Matrix3::identity() * 1e-12,
            p0: Matrix4::identity() * 1e-2,
            x0: Some(x0),
        }
    }

    fn meas(x: &Vector4<f64>) -> Vector3<f64> {
        measurement_matrix() * x
    }

    #[test]
    fn converges_on_constant_velocity_truth() {
        let dt = 1e-3;
        let truth = |t: f64| Vector4::new(0.4 - 0.3 * t, -0.3, 0.1 - 0.3 * t, -0.3);
        let cfg = exact_config(Vector4::new(0.41, 0.0, 0.12, 0.1));
        let mut st = KalmanState {
            x_hat: cfg.x0.unwrap(),
            p: cfg.p0,
            t: 0.0,
        };
        for k in 1..=200 {
            st = kf_step(&st, Vector2::zeros(), meas(&truth(k as f64 * dt)), dt, &cfg).unwrap();
        }
        let err = (st.x_hat - truth(st.t)).amax();
        assert!(err < 1e-9, "error {err}");
    }

    #[test]
    fn tracks_free_fall_parabola() {
        let dt = 1e-3;
        let truth = |t: f64| {
            Vector4::new(
                0.5 - 0.5 * GRAVITY * t * t,
                -GRAVITY * t,
                0.2 - 0.5 * GRAVITY * t * t,
                -GRAVITY * t,
            )
        };
        let cfg = exact_config(truth(0.0));
        let mut st = KalmanState {
            x_hat: truth(0.0),
            p: Matrix4::zeros(),
            t: 0.0,
        };
        let u = Vector2::new(-GRAVITY, -GRAVITY);
        for k in 1..=300 {
            st = kf_step(&st, u, meas(&truth(k as f64 * dt)), dt, &cfg).unwrap();
            assert!((st.x_hat - truth(st.t)).amax() < 1e-9);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = KalmanConfig {
            q: KalmanConfig::white_acceleration_q(0.5, 1e-3),
            r: Matrix3::from_diagonal(&Vector3::new(25e-6, 1e-8, 1e-3)),
            p0: Matrix4::identity() * 1e-2,
            x0: None,
        };
        cfg.validate().unwrap();
        let mut st = KalmanState {
            x_hat: Vector4::zeros(),
            p: cfg.p0,
            t: 0.0,
        };
        for _ in 0..20_000 {
            let u = Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let z = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let dt = rng.random_range(1e-4..5e-3);
            st = kf_step(&st, u, z, dt, &cfg).unwrap();
            assert_eq!(st.p, st.p.transpose());
            assert!(st.p.symmetric_eigenvalues().min() >= -1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = exact_config(Vector4::zeros());
        let st = KalmanState {
            x_hat: Vector4::zeros(),
            p: cfg.p0,
            t: 0.0,
        };
        assert!(kf_step(&st, Vector2::zeros(), Vector3::zeros(), 0.0, &cfg).is_err());
        let singular = KalmanConfig {
            r: Matrix3::zeros(),
            p0: Matrix4::zeros(),
            ..cfg.clone()
        };
        let st0 = KalmanState {
            p: Matrix4::zeros(),
            ..st
        };
        let bad = KalmanConfig {
            q: Matrix4::zeros(),
            ..singular
        };
        assert!(matches!(
            kf_step(&st0, Vector2::zeros(), Vector3::zeros(), 1e-3, &bad),
            Err(Error::Numeric(_))
        ));
        assert!(bad.validate().is_err());
    }
}
