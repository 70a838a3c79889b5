//! Truth simulation of one hop on granular media.
//!
//! The state is integrated in the generalized coordinates `[x_f, θ]` with
//! fixed-step RK4; the body height follows from kinematic closure so the
//! constraint holds exactly at every step. The terrain's added mass is moved
//! to the inertia side of the foot equation, which removes the algebraic
//! loop between contact force and foot acceleration.

mod intrusion;
mod sensors;

pub use intrusion::{run_constant_speed_intrusion, IntrusionConfig, IntrusionLog, IntrusionSample};
pub use sensors::{sample_sensors, ImuBias, NoiseConfig, SensorFrame};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{motor_torque, next_phase, virtual_leg_force, ControllerConfig, LegSignals, Phase, PhaseKind};
use crate::error::{Error, Result};
use crate::linkage::{theta_for_length, Geometry, LinkageParams, MassMatrix};
use crate::terrain::{added_mass_profile, penetration_depth, terrain_force, ForceDecomposition, TerrainParams};
use crate::GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopperState {
    pub x_b: f64,
    pub v_b: f64,
    pub x_f: f64,
    pub v_f: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub phase: Phase,
    pub t: f64,
}

impl HopperState {
    /// Build a state from generalized coordinates, filling in the body by closure.
    pub fn from_coordinates(
        x_f: f64,
        v_f: f64,
        theta: f64,
        theta_dot: f64,
        phase: Phase,
        t: f64,
        linkage: &LinkageParams,
    ) -> Self {
        let g = Geometry::at(theta, linkage);
        Self {
            x_b: x_f + g.length + linkage.mount_offset,
            v_b: v_f + g.jacobian * theta_dot,
            x_f,
            v_f,
            theta,
            theta_dot,
            phase,
            t,
        }
    }

    fn coordinates(&self) -> [f64; 4] {
        [self.x_f, self.v_f, self.theta, self.theta_dot]
    }

    fn is_finite(&self) -> bool {
        [self.x_b, self.v_b, self.x_f, self.v_f, self.theta, self.theta_dot]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Total mechanical energy of body, foot and rotors [J].
    pub fn energy(&self, linkage: &LinkageParams) -> f64 {
        let kin = 0.5 * linkage.m_body * self.v_b * self.v_b
            + 0.5 * linkage.m_foot * self.v_f * self.v_f
            + linkage.rotor_inertia * self.theta_dot * self.theta_dot;
        let pot = GRAVITY * (linkage.m_body * self.x_b + linkage.m_foot * self.x_f);
        kin + pot
    }
}

/// Time derivative of the generalized state plus the quantities it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub v_f: f64,
    pub a_f: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
    pub a_b: f64,
    pub force: ForceDecomposition,
}

/// Accelerations of the coupled body-foot-terrain system for per-motor
/// torque `tau` (positive extends the leg). `terrain = None` disables contact.
pub fn dynamics_derivative(
    state: &HopperState,
    tau: f64,
    terrain: Option<&TerrainParams>,
    linkage: &LinkageParams,
) -> Derivative {
    let geom = Geometry::at(state.theta, linkage);
    let mm = MassMatrix::at(&geom, linkage);
    let (j, jr) = (geom.jacobian, geom.jacobian_rate);
    let mb = linkage.m_body;
    let td2 = state.theta_dot * state.theta_dot;

    let h1_free = -mm.m11 * GRAVITY - mb * jr * td2;
    let h2 = -2.0 * tau - mb * j * jr * td2 - mb * GRAVITY * j;

    let solve = |m11: f64, h1: f64| {
        let det = m11 * mm.m22 - mm.m12 * mm.m12;
        assert!(det > 0.0, "singular effective mass matrix");
        ((h1 * mm.m22 - mm.m12 * h2) / det, (m11 * h2 - mm.m12 * h1) / det)
    };

    let mut a_free = None;
    let (a_f, theta_ddot, force) = match terrain {
        Some(tp) => {
            let z = penetration_depth(state.x_f, tp);
            let z_dot = -state.v_f;
            if z > 0.0 && z_dot >= 0.0 {
                let (m_a, grad) = added_mass_profile(z, tp);
                let lead = tp.k_stiff * z + grad * z_dot * z_dot;
                let (a_f, th) = solve(mm.m11 + m_a, h1_free + lead);
                let f = terrain_force(z, z_dot, -a_f, tp);
                if f.f_total > 0.0 {
                    (a_f, th, f)
                } else {
                    // Grains cannot pull: contact releases, foot moves freely.
                    let (a_f, th) = *a_free.get_or_insert_with(|| solve(mm.m11, h1_free));
                    (a_f, th, terrain_force(z, z_dot, -a_f, tp))
                }
            } else {
                let f = terrain_force(z, z_dot, 0.0, tp);
                let (a_f, th) = solve(mm.m11, h1_free + f.f_total);
                (a_f, th, f)
            }
        }
        None => {
            let (a_f, th) = solve(mm.m11, h1_free);
            (a_f, th, ForceDecomposition::default())
        }
    };
    Derivative {
        v_f: state.v_f,
        a_f,
        theta_dot: state.theta_dot,
        theta_ddot,
        a_b: a_f + j * theta_ddot + jr * td2,
        force,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step [s].
    pub dt: f64,
    /// Sensor logging period [s]; must be a whole multiple of `dt`.
    pub sensor_period: f64,
    /// Foot height above the surface at release [m].
    pub drop_height: f64,
    /// Downward foot speed at release [m/s].
    pub release_speed: f64,
    /// Time the robot hangs motionless before release [s].
    pub hold_time: f64,
    pub t_max: f64,
    /// Logging continues this long after the controller re-enters flight [s].
    pub post_liftoff: f64,
    pub contact_enabled: bool,
    pub actuation_enabled: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            sensor_period: 1e-3,
            drop_height: 0.05,
            release_speed: 0.0,
            hold_time: 0.5,
            t_max: 3.0,
            post_liftoff: 0.1,
            contact_enabled: true,
            actuation_enabled: true,
        }
    }
}

impl SimConfig {
    /// Release height that produces a free-fall touchdown speed `v` [m].
    pub fn drop_height_for_speed(v: f64) -> f64 {
        v * v / (2.0 * GRAVITY)
    }

    pub fn decimation(&self) -> Result<usize> {
        let ratio = self.sensor_period / self.dt;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * n {
            return Err(Error::Config(format!(
                "sim: sensor_period {} is not a whole multiple of dt {}",
                self.sensor_period, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("sim: {what}")));
        if !(self.dt > 0.0 && self.t_max > 0.0) {
            return bad("dt and t_max must be positive");
        }
        if !(self.drop_height >= 0.0 && self.release_speed >= 0.0) {
            return bad("drop_height and release_speed must be nonnegative");
        }
        if !(self.hold_time >= 0.0 && self.post_liftoff >= 0.0) {
            return bad("hold_time and post_liftoff must be nonnegative");
        }
        self.decimation().map(|_| ())
    }
}

/// Everything a hop trial depends on apart from the seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub sim: SimConfig,
    pub controller: ControllerConfig,
    pub terrain: TerrainParams,
    pub linkage: LinkageParams,
    pub noise: NoiseConfig,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.linkage.validate()?;
        self.terrain.validate()?;
        self.controller.validate(&self.linkage)?;
        self.sim.validate()?;
        self.noise.validate()
    }
}

/// Truth at one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthSample {
    pub state: HopperState,
    pub accel_body: f64,
    pub accel_foot: f64,
    pub theta_ddot: f64,
    /// Per-motor torque held over the step [N·m].
    pub tau: f64,
    pub force: ForceDecomposition,
}

/// Touchdown, compression-extension and liftoff times [s], with the foot
/// speed at touchdown [m/s].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrideEvents {
    pub t_td: f64,
    pub t_ce: f64,
    pub t_lo: f64,
    pub v_td: f64,
}

impl StrideEvents {
    pub fn stance_duration(&self) -> f64 {
        self.t_lo - self.t_td
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialLog {
    pub frames: Vec<SensorFrame>,
    pub truth: Vec<TruthSample>,
    pub events: StrideEvents,
    pub config: TrialConfig,
    pub seed: u64,
    pub imu_bias: ImuBias,
}

fn rk4_step(y: [f64; 4], dt: f64, f: impl Fn([f64; 4]) -> [f64; 4]) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    let k1 = f(y);
    let k2 = f(add(y, k1, 0.5 * dt));
    let k3 = f(add(y, k2, 0.5 * dt));
    let k4 = f(add(y, k3, dt));
    let mut out = y;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Advance the generalized state by one RK4 step with torque held constant.
pub fn integrate_step(
    state: &HopperState,
    tau: f64,
    dt: f64,
    terrain: Option<&TerrainParams>,
    linkage: &LinkageParams,
) -> HopperState {
    let f = |y: [f64; 4]| {
        let s = HopperState::from_coordinates(y[0], y[1], y[2], y[3], state.phase, state.t, linkage);
        let d = dynamics_derivative(&s, tau, terrain, linkage);
        [d.v_f, d.a_f, d.theta_dot, d.theta_ddot]
    };
    let y = rk4_step(state.coordinates(), dt, f);
    HopperState::from_coordinates(y[0], y[1], y[2], y[3], state.phase, state.t + dt, linkage)
}

/// Simulate release, touchdown, stance and liftoff of one hop.
pub fn run_hop_trial(config: &TrialConfig, seed: u64) -> Result<TrialLog> {
    config.validate()?;
    let TrialConfig {
        sim,
        controller,
        terrain,
        linkage,
        noise,
    } = config;
    let decim = sim.decimation()?;
    let terrain_ref = sim.contact_enabled.then_some(terrain);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bias = ImuBias::draw(noise, &mut rng);

    let theta0 = theta_for_length(controller.l0_compress, linkage)?;
    let mut state = HopperState::from_coordinates(
        terrain.surface_height + sim.drop_height,
        -sim.release_speed,
        theta0,
        0.0,
        Phase::flight(0.0),
        0.0,
        linkage,
    );

    let n_max = (sim.t_max / sim.dt).ceil() as usize;
    let mut truth = Vec::with_capacity(n_max.min(1 << 16));
    let mut frames = Vec::with_capacity(n_max / decim + 1);
    let mut last_force = 0.0;
    let mut been_in_extension = false;
    let mut t_stop = f64::INFINITY;

    for step in 0..=n_max {
        let t = step as f64 * sim.dt;
        state.t = t;
        let held = t < sim.hold_time;
        let geom = Geometry::at(state.theta, linkage);
        let leg_rate = geom.jacobian * state.theta_dot;

        if !held {
            let signals = LegSignals {
                t,
                length: geom.length,
                length_rate: leg_rate,
                penetration: penetration_depth(state.x_f, terrain),
                foot_velocity: state.v_f,
                contact_force: last_force,
            };
            state.phase = next_phase(state.phase, &signals, controller);
        }
        let tau = if sim.actuation_enabled {
            let f_leg = virtual_leg_force(state.phase.kind, geom.length, leg_rate, controller);
            motor_torque(f_leg, state.theta, linkage)?
        } else {
            0.0
        };

        let sample = if held {
            TruthSample {
                state,
                accel_body: 0.0,
                accel_foot: 0.0,
                theta_ddot: 0.0,
                tau,
                force: ForceDecomposition::default(),
            }
        } else {
            let d = dynamics_derivative(&state, tau, terrain_ref, linkage);
            TruthSample {
                state,
                accel_body: d.a_b,
                accel_foot: d.a_f,
                theta_ddot: d.theta_ddot,
                tau,
                force: d.force,
            }
        };
        last_force = sample.force.f_total;
        truth.push(sample);
        if step % decim == 0 {
            let mut frame = sample_sensors(&sample, noise, &bias, linkage.torque_constant, &mut rng);
            frame.t = (step / decim) as f64 * sim.sensor_period;
            frames.push(frame);
        }

        match state.phase.kind {
            PhaseKind::Extension => been_in_extension = true,
            PhaseKind::Flight if been_in_extension && t_stop.is_infinite() && sample.force.f_total == 0.0 => {
                t_stop = t + sim.post_liftoff;
            }
            _ => {}
        }
        if t >= t_stop {
            break;
        }

        if !held {
            let next = integrate_step(&state, tau, sim.dt, terrain_ref, linkage);
            if !next.is_finite() {
                return Err(Error::Integration {
                    t: t + sim.dt,
                    reason: "non-finite state".into(),
                });
            }
            if next.theta < linkage.theta_min || next.theta > linkage.theta_max {
                return Err(Error::Integration {
                    t: t + sim.dt,
                    reason: format!("joint angle {:.4} rad left the linkage workspace", next.theta),
                });
            }
            state = next;
        }
    }

    let events = detect_events(&truth, terrain)?;
    Ok(TrialLog {
        frames,
        truth,
        events,
        config: *config,
        seed,
        imu_bias: bias,
    })
}

/// Segment the first stride: touchdown is the first penetrating sample,
/// compression-extension the controller's switch, liftoff the last sample
/// of the first contact block that still carries load.
pub fn detect_events(truth: &[TruthSample], terrain: &TerrainParams) -> Result<StrideEvents> {
    let depth = |s: &TruthSample| penetration_depth(s.state.x_f, terrain);
    let td = truth
        .iter()
        .position(|s| depth(s) > 0.0)
        .ok_or_else(|| Error::TrialMalformed("no touchdown".into()))?;
    let ce = truth[td..]
        .iter()
        .find(|s| s.state.phase.kind == PhaseKind::Extension)
        .map(|s| s.state.phase.entered_at)
        .ok_or_else(|| Error::TrialMalformed("no compression-extension transition".into()))?;
    let block_end = truth[td..]
        .iter()
        .position(|s| depth(s) <= 0.0)
        .map(|i| td + i)
        .ok_or_else(|| Error::TrialMalformed("no liftoff before the end of the log".into()))?;
    let lo = truth[td..block_end]
        .iter()
        .rposition(|s| s.force.f_total > 0.0)
        .map(|i| td + i)
        .ok_or_else(|| Error::TrialMalformed("contact never carried load".into()))?;
    let events = StrideEvents {
        t_td: truth[td].state.t,
        t_ce: ce,
        t_lo: truth[lo].state.t,
        v_td: -truth[td.saturating_sub(1)].state.v_f,
    };
    if !(events.t_td < events.t_ce && events.t_ce < events.t_lo) {
        return Err(Error::TrialMalformed(format!(
            "events out of order: TD {:.4} s, CE {:.4} s, LO {:.4} s",
            events.t_td, events.t_ce, events.t_lo
        )));
    }
    Ok(events)
}
