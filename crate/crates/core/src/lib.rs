//! Simulation and estimation workbench for a vertically constrained hopper
//! landing on granular media.
//!
//! The crate is organised bottom-up:
//!
//! * [`linkage`]: five-bar leg kinematics and reduced foot-channel dynamics.
//! * [`terrain`]: granular reaction law with depth stiffness, velocity-squared
//!   drag from added-mass flux and acceleration-dependent added mass.
//! * [`controller`]: stance/flight state machine with a phase-dependent
//!   virtual leg spring.
//! * [`simulator`]: fixed-step RK4 truth integration, the constant-speed
//!   intrusion rig and the 1 kHz sensor model.
//! * [`estimation`]: Kalman filter over body/foot kinematics, the momentum
//!   observer and the quasi-static Jacobian baseline.
//! * [`identification`]: OLS/WLS stiffness fits, depth-speed model fitting,
//!   added-mass reconstruction and the three-treatment comparison.

// Guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod estimation;
pub mod identification;
pub mod linkage;
pub mod simulator;
pub mod terrain;

pub use error::{Error, Result};

/// Gravitational acceleration [m/s²].
pub const GRAVITY: f64 = 9.81;
