//! Spherical pendulum payload driven by the crane tip.
//!
//! The cable frame is `R06 = Rx(phi_x) Ry(phi_y)`, the payload is a point
//! mass at distance `L` along the cable, and the tip is assumed to move
//! only horizontally.

use nalgebra::{SVector, Vector3, Vector4};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kinematics::{ChainFrames, CraneGeometry, JointState};

/// Guard on `|phi_y|` below `pi/2` where the equations of motion divide by
/// `cos(phi_y)`.
pub const DEFAULT_CONE_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendulumState {
    pub phi_x: f64,
    pub phi_y: f64,
    pub phidot_x: f64,
    pub phidot_y: f64,
}

impl PendulumState {
    pub fn new(phi_x: f64, phi_y: f64, phidot_x: f64, phidot_y: f64) -> Self {
        Self {
            phi_x,
            phi_y,
            phidot_x,
            phidot_y,
        }
    }

    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.phi_x, self.phi_y, self.phidot_x, self.phidot_y)
    }

    fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayloadParams {
    /// Payload mass [kg].
    pub mass: f64,
    /// True cable length from the tip to the payload centre of gravity [m].
    pub length: f64,
    pub gravity: f64,
}

impl Default for PayloadParams {
    fn default() -> Self {
        Self {
            mass: 12.7,
            length: 1.05,
            gravity: 9.81,
        }
    }
}

impl PayloadParams {
    pub fn natural_frequency(&self) -> f64 {
        (self.gravity / self.length).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("mass", self.mass),
            ("length", self.length),
            ("gravity", self.gravity),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "payload {name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_cone(phi_y: f64) -> Result<()> {
    if phi_y.abs() >= 0.5 * std::f64::consts::PI - DEFAULT_CONE_MARGIN || !phi_y.is_finite() {
        Err(Error::ConeSingularity { phi_y })
    } else {
        Ok(())
    }
}

/// Angular accelerations `(phi_x'', phi_y'')` for horizontal tip
/// acceleration `tip_accel = (vdot_x, vdot_y)`.
pub fn pendulum_accel(
    s: &PendulumState,
    tip_accel: [f64; 2],
    length: f64,
    gravity: f64,
) -> Result<[f64; 2]> {
    check_cone(s.phi_y)?;
    let w2 = gravity / length;
    let (sx, cx) = s.phi_x.sin_cos();
    let (sy, cy) = s.phi_y.sin_cos();
    let [ax, ay] = tip_accel;
    let phiddot_x =
        (2.0 * s.phidot_x * s.phidot_y * sy + ay * cx / length - w2 * sx) / cy;
    let phiddot_y = -w2 * cx * sy
        - s.phidot_x * s.phidot_x * sy * cy
        - (ax * cy + ay * sx * sy) / length;
    Ok([phiddot_x, phiddot_y])
}

/// Unit vector along the cable from the tip towards the payload.
pub fn cable_direction(phi_x: f64, phi_y: f64) -> Vector3<f64> {
    let (sx, cx) = phi_x.sin_cos();
    let (sy, cy) = phi_y.sin_cos();
    Vector3::new(sy, -sx * cy, cx * cy)
}

/// Mechanical energy of the payload relative to a stationary tip.
pub fn pendulum_energy(s: &PendulumState, payload: &PayloadParams) -> f64 {
    let l = payload.length;
    let cy = s.phi_y.cos();
    let speed_sq = l * l * (s.phidot_y * s.phidot_y + cy * cy * s.phidot_x * s.phidot_x);
    0.5 * payload.mass * speed_sq - payload.mass * payload.gravity * l * s.phi_x.cos() * cy
}

/// One classical Runge-Kutta step of `x' = f(x)`.
pub fn rk4_step<const N: usize, F>(x: &SVector<f64, N>, dt: f64, mut f: F) -> Result<SVector<f64, N>>
where
    F: FnMut(&SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (0.5 * dt)))?;
    let k3 = f(&(x + k2 * (0.5 * dt)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Advances the pendulum alone under a prescribed tip acceleration.
pub fn step_pendulum(
    s: &PendulumState,
    tip_accel: [f64; 2],
    payload: &PayloadParams,
    dt: f64,
) -> Result<PendulumState> {
    let x = rk4_step(&s.to_vector(), dt, |x| {
        let st = PendulumState::from_vector(x);
        let [ax, ay] = pendulum_accel(&st, tip_accel, payload.length, payload.gravity)?;
        Ok(Vector4::new(x[2], x[3], ax, ay))
    })?;
    Ok(PendulumState::from_vector(&x))
}

/// Ground-truth state of crane and payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub joints: JointState,
    pub pendulum: PendulumState,
}

/// Crane and payload physics used by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub geometry: CraneGeometry,
    pub payload: PayloadParams,
    /// Time constant of the joint-rate servo response [s].
    pub actuator_lag: f64,
}

const JACOBIAN_RATE_STEP: f64 = 1e-6;

impl Plant {
    pub fn new(geometry: CraneGeometry, payload: PayloadParams, actuator_lag: f64) -> Result<Self> {
        geometry.validate()?;
        payload.validate()?;
        if !(actuator_lag > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "actuator lag must be positive, got {actuator_lag}"
            )));
        }
        Ok(Self {
            geometry,
            payload,
            actuator_lag,
        })
    }

    /// Tip acceleration `J qddot + Jdot qdot`; `Jdot qdot` is the central
    /// difference of the Jacobian along `qdot`.
    pub fn tip_acceleration(
        &self,
        q: &Vector3<f64>,
        qdot: &Vector3<f64>,
        qddot: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        let jac = ChainFrames::compute(q, &self.geometry)?.jacobian();
        let mut accel = jac * qddot;
        if qdot.iter().any(|v| *v != 0.0) {
            let h = JACOBIAN_RATE_STEP;
            let jp = ChainFrames::compute(&(q + qdot * h), &self.geometry)?.jacobian();
            let jm = ChainFrames::compute(&(q - qdot * h), &self.geometry)?.jacobian();
            accel += (jp - jm) * qdot / (2.0 * h);
        }
        Ok(accel)
    }

    fn derivative(&self, x: &SVector<f64, 10>, command: &Vector3<f64>) -> Result<SVector<f64, 10>> {
        let q = Vector3::new(x[0], x[1], x[2]);
        let qdot = Vector3::new(x[3], x[4], x[5]);
        let qddot = (command - qdot) / self.actuator_lag;
        let tip = self.tip_acceleration(&q, &qdot, &qddot)?;
        let pend = PendulumState::new(x[6], x[7], x[8], x[9]);
        let [ax, ay] = pendulum_accel(
            &pend,
            [tip.x, tip.y],
            self.payload.length,
            self.payload.gravity,
        )?;
        let mut dx = SVector::<f64, 10>::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&qdot);
        dx.fixed_rows_mut::<3>(3).copy_from(&qddot);
        dx[6] = x[8];
        dx[7] = x[9];
        dx[8] = ax;
        dx[9] = ay;
        Ok(dx)
    }

    pub fn step(&self, state: &SimState, command: &Vector3<f64>, dt: f64) -> Result<SimState> {
        step_ground_truth(state, command, self, dt)
    }
}

/// Advances crane joints and payload by one physics step. Joint rates
/// follow `command` through a first-order lag; the pendulum sees only the
/// horizontal part of the resulting tip acceleration.
pub fn step_ground_truth(
    state: &SimState,
    command: &Vector3<f64>,
    plant: &Plant,
    dt: f64,
) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let j = &state.joints;
    let p = &state.pendulum;
    let x = SVector::<f64, 10>::from_column_slice(&[
        j.q[0], j.q[1], j.q[2], j.qdot[0], j.qdot[1], j.qdot[2], p.phi_x, p.phi_y, p.phidot_x,
        p.phidot_y,
    ]);
    let next = rk4_step(&x, dt, |x| plant.derivative(x, command))?;
    check_cone(next[7])?;
    Ok(SimState {
        joints: JointState {
            q: Vector3::new(next[0], next[1], next[2]),
            qdot: Vector3::new(next[3], next[4], next[5]),
        },
        pendulum: PendulumState::new(next[6], next[7], next[8], next[9]),
    })
}
