//! Generalized-momentum observer on the reduced foot channel.
//!
//! With `p_f = M_f(θ)·ẋ_f` the contact force is `F_c = ṗ_f − ψ`, and the
//! residual `r = k·(p_f − p̂_f)`, `dp̂_f/dt = ψ + r` obeys `ṙ = k·(F_c − r)`
//! without ever differentiating a velocity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkage::{reduced_dynamics_coeffs, LinkageParams};
use crate::GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    /// Internal momentum estimate [kg·m/s].
    pub p_hat: f64,
    /// Residual, i.e. the contact-force estimate [N].
    pub r: f64,
    /// Observer gain [1/s].
    pub k_obs: f64,
}

impl ObserverState {
    /// Start with zero residual at the given momentum.
    pub fn new(k_obs: f64, theta: f64, v_f: f64, linkage: &LinkageParams) -> Result<Self> {
        if !(k_obs > 0.0) {
            return Err(Error::Config(format!("observer gain must be positive, got {k_obs}")));
        }
        let m_f = reduced_dynamics_coeffs(theta, linkage)?.m_f;
        Ok(Self {
            p_hat: m_f * v_f,
            r: 0.0,
            k_obs,
        })
    }
}

/// `ψ = (∂M_f/∂θ)·θ̇·ẋ_f − M_f·g − β·τ − C·θ̇²` [N].
pub fn psi(theta: f64, theta_dot: f64, v_f: f64, tau: f64, linkage: &LinkageParams) -> Result<f64> {
    let c = reduced_dynamics_coeffs(theta, linkage)?;
    Ok(c.dmf_dtheta * theta_dot * v_f - c.m_f * GRAVITY - c.beta * tau - c.c_coef * theta_dot * theta_dot)
}

/// One discrete observer update. Requires `dt·k_obs < 1`.
///
/// The momentum estimate is advanced explicitly, and the residual gain is
/// the zero-order-hold equivalent `(1 − e^(−k·dt))/dt`, which makes the
/// sampled step response exactly `1 − e^(−k·t)` for a piecewise-constant
/// force.
pub fn mo_step(
    obs: &ObserverState,
    theta: f64,
    theta_dot: f64,
    v_f: f64,
    tau: f64,
    dt: f64,
    linkage: &LinkageParams,
) -> Result<ObserverState> {
    if !(dt > 0.0) {
        return Err(Error::Domain {
            name: "dt",
            value: dt,
            domain: "(0, ∞) s".into(),
        });
    }
    if !(obs.k_obs > 0.0 && dt * obs.k_obs < 1.0) {
        return Err(Error::Config(format!(
            "observer unstable: dt·k_obs = {} must lie in (0, 1)",
            dt * obs.k_obs
        )));
    }
    let c = reduced_dynamics_coeffs(theta, linkage)?;
    let psi = c.dmf_dtheta * theta_dot * v_f - c.m_f * GRAVITY - c.beta * tau - c.c_coef * theta_dot * theta_dot;
    let p_hat = obs.p_hat + dt * (psi + obs.r);
    let gain = -(-obs.k_obs * dt).exp_m1() / dt;
    let r = gain * (c.m_f * v_f - p_hat);
    Ok(ObserverState {
        p_hat,
        r,
        k_obs: obs.k_obs,
    })
}
