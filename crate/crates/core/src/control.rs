//! Cascade anti-sway controller.
//!
//! The inner loop feeds back the cable angular rates so that the linearized
//! payload becomes a pair of damped oscillators with natural frequency
//! `w0 = sqrt(g / L)` and damping `zeta`. The outer PD loop moves the tip
//! towards the reference with bandwidth `w0 / k_s`. The resulting tip
//! acceleration command is integrated into a velocity command, passed
//! through a first-order velocity loop, and mapped to joint rates through
//! the inverse tip Jacobian.

use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kinematics::{solve_tip_velocity, CraneGeometry, ChainFrames};
use crate::pendulum::PendulumState;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    /// Relative damping of the inner (payload) loop.
    pub zeta: f64,
    /// Relative damping of the outer (tip position) loop.
    pub zeta_s: f64,
    /// Separation between `w0` and the outer-loop bandwidth.
    pub k_s: f64,
    /// Velocity loop time constant [s].
    pub velocity_time_constant: f64,
    /// Saturation of the commanded tip velocity per axis [m/s].
    pub v_max: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            zeta: 0.2,
            zeta_s: 1.0,
            k_s: 5.0,
            velocity_time_constant: 0.1,
            v_max: 0.5,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::InvalidParameter(format!("zeta must lie in (0, 1], got {}", self.zeta)));
        }
        if !(self.zeta_s >= 0.7 && self.zeta_s <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "zeta_s must lie in [0.7, 1], got {}",
                self.zeta_s
            )));
        }
        if !(self.k_s >= 5.0) {
            return Err(Error::InvalidParameter(format!("k_s must be at least 5, got {}", self.k_s)));
        }
        if !(self.velocity_time_constant > 0.0 && self.v_max > 0.0) {
            return Err(Error::InvalidParameter(
                "velocity loop time constant and v_max must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Outer-loop `(k_p, k_d)` for natural frequency `w0`.
    pub fn outer_gains(&self, w0: f64) -> (f64, f64) {
        let ws = w0 / self.k_s;
        (ws * ws, 2.0 * self.zeta_s * ws)
    }
}

/// Tip acceleration command with rate feedback from the cable angles.
pub fn damping_accel(phidot: [f64; 2], length: f64, gravity: f64, zeta: f64, u: [f64; 2]) -> [f64; 2] {
    let w0 = (gravity / length).sqrt();
    let k = 2.0 * length * zeta * w0;
    [k * phidot[1] + u[0], -k * phidot[0] + u[1]]
}

/// Planar tip position and velocity `[x, y, xdot, ydot]`.
pub type PlanarState = [f64; 4];

/// Outer PD loop on the tip position.
pub fn outer_pd(tip: &PlanarState, desired: &PlanarState, k_p: f64, k_d: f64) -> [f64; 2] {
    [
        k_p * (desired[0] - tip[0]) + k_d * (desired[2] - tip[2]),
        k_p * (desired[1] - tip[1]) + k_d * (desired[3] - tip[3]),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityLoopState {
    /// Integrated acceleration commands [m/s].
    pub w: [f64; 2],
    /// Velocity loop outputs, the commanded tip velocity [m/s].
    pub v: [f64; 2],
}

impl VelocityLoopState {
    /// `vdot = (w - v) / T_v`, the acceleration the loop is producing.
    pub fn acceleration(&self, time_constant: f64) -> [f64; 2] {
        [
            (self.w[0] - self.v[0]) / time_constant,
            (self.w[1] - self.v[1]) / time_constant,
        ]
    }
}

/// Integrates the acceleration command into `w` (Euler, clamped at
/// `1.5 v_max`) and advances `v` exactly through the first-order loop
/// (clamped at `v_max`).
pub fn velocity_loop_step(
    vls: &VelocityLoopState,
    accel_cmd: [f64; 2],
    time_constant: f64,
    v_max: f64,
    dt: f64,
) -> VelocityLoopState {
    let w_limit = 1.5 * v_max;
    let decay = (-dt / time_constant).exp();
    let mut next = *vls;
    for k in 0..2 {
        next.w[k] = (vls.w[k] + accel_cmd[k] * dt).clamp(-w_limit, w_limit);
        let v = next.w[k] + (vls.v[k] - next.w[k]) * decay;
        next.v[k] = v.clamp(-v_max, v_max);
    }
    next
}

/// Everything one control tick reads.
#[derive(Debug, Clone, Copy)]
pub struct ControlInputs<'a> {
    pub estimate: &'a PendulumState,
    /// Length used for `w0` and the damping gain.
    pub length: f64,
    pub gravity: f64,
    pub tip: PlanarState,
    pub reference: PlanarState,
    pub damping_on: bool,
    pub q: &'a Vector3<f64>,
    pub geometry: &'a CraneGeometry,
    pub max_condition: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub joint_rates: Vector3<f64>,
    /// Commanded tip acceleration `(xddot_5, yddot_5)` before the velocity loop.
    pub accel_cmd: [f64; 2],
    /// Velocity loop acceleration `(vdot_x, vdot_y)`, routed to the
    /// estimators as the input `a`.
    pub vdot: [f64; 2],
    pub velocity_loop: VelocityLoopState,
}

/// Outer PD, optional damping term, velocity loop, inverse Jacobian.
pub fn control_tick(
    inputs: &ControlInputs<'_>,
    gains: &ControllerGains,
    vls: &VelocityLoopState,
) -> Result<ControlOutput> {
    let w0 = (inputs.gravity / inputs.length).sqrt();
    let (k_p, k_d) = gains.outer_gains(w0);
    let u = outer_pd(&inputs.tip, &inputs.reference, k_p, k_d);
    let accel_cmd = if inputs.damping_on {
        let e = inputs.estimate;
        damping_accel([e.phidot_x, e.phidot_y], inputs.length, inputs.gravity, gains.zeta, u)
    } else {
        u
    };
    let next = velocity_loop_step(vls, accel_cmd, gains.velocity_time_constant, gains.v_max, inputs.dt);
    let jac = ChainFrames::compute(inputs.q, inputs.geometry)?.jacobian();
    let joint_rates = solve_tip_velocity(
        &jac,
        Vector3::new(next.v[0], next.v[1], 0.0),
        inputs.max_condition,
    )?;
    Ok(ControlOutput {
        joint_rates,
        accel_cmd,
        vdot: next.acceleration(gains.velocity_time_constant),
        velocity_loop: next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, nominal_configuration, DEFAULT_MAX_CONDITION};
    use approx::assert_relative_eq;

    const G: f64 = 9.81;

    #[test]
    fn quiescent_damping_command() {
        assert_eq!(damping_accel([0.0, 0.0], 1.05, G, 0.2, [0.0, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn damping_command_value() {
        let a = damping_accel([0.0, 0.1], 1.05, G, 0.2, [0.0, 0.0]);
        assert_relative_eq!(a[0], 0.12838, epsilon = 1e-5);
        assert_eq!(a[1], 0.0);
        let b = damping_accel([0.1, 0.0], 1.05, G, 0.2, [0.0, 0.0]);
        assert!(b[1] < 0.0);
    }

    #[test]
    fn outer_pd_values() {
        let gains = ControllerGains::default();
        let w0 = (G / 1.05).sqrt();
        let (kp, kd) = gains.outer_gains(w0);
        assert_relative_eq!(w0 / 5.0, 0.61132, epsilon = 1e-5);
        assert_relative_eq!(kp, 0.37371, epsilon = 1e-5);
        assert_relative_eq!(kd, 1.22264, epsilon = 1e-5);
        let zero = outer_pd(&[1.0, 2.0, 0.0, 0.0], &[1.0, 2.0, 0.0, 0.0], kp, kd);
        assert_eq!(zero, [0.0, 0.0]);
        let u = outer_pd(&[0.0; 4], &[0.1, 0.0, 0.0, 0.0], kp, kd);
        assert_relative_eq!(u[0], 0.037371, epsilon = 1e-6);
        let u = outer_pd(&[0.0; 4], &[0.0, 0.0, 0.1, 0.0], kp, kd);
        assert_relative_eq!(u[0], 0.122264, epsilon = 1e-6);
    }

    #[test]
    fn gain_invariants_are_enforced() {
        let bad = ControllerGains {
            k_s: 3.0,
            ..ControllerGains::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControllerGains {
            zeta_s: 0.5,
            ..ControllerGains::default()
        };
        assert!(bad.validate().is_err());
        assert!(ControllerGains::default().validate().is_ok());
    }

    #[test]
    fn velocity_loop_tracks_constant_acceleration() {
        let (tv, dt, a) = (0.1, 0.001, 0.2);
        let mut s = VelocityLoopState::default();
        for _ in 0..1000 {
            s = velocity_loop_step(&s, [a, 0.0], tv, 10.0, dt);
        }
        assert_relative_eq!(s.w[0], a * 1.0, epsilon = 1e-12);
        // ramp tracking lag of a first-order loop is a T_v
        assert_relative_eq!(s.w[0] - s.v[0], a * tv, max_relative = 0.01);
    }

    #[test]
    fn velocity_loop_settles_on_constant_command() {
        let tv = 0.1;
        let mut s = VelocityLoopState {
            w: [0.3, -0.2],
            v: [0.0, 0.0],
        };
        let steps = (4.0 * tv / 0.01) as usize;
        for _ in 0..steps {
            s = velocity_loop_step(&s, [0.0, 0.0], tv, 1.0, 0.01);
        }
        assert!((s.v[0] / 0.3 - 1.0).abs() < 0.02);
        assert!((s.v[1] / -0.2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn velocity_loop_fixed_point() {
        let s = VelocityLoopState {
            w: [0.1, 0.2],
            v: [0.1, 0.2],
        };
        assert_eq!(velocity_loop_step(&s, [0.0, 0.0], 0.1, 0.5, 0.05), s);
    }

    #[test]
    fn velocity_loop_saturates() {
        let mut s = VelocityLoopState::default();
        for _ in 0..200 {
            s = velocity_loop_step(&s, [1.0, -1.0], 0.1, 0.5, 0.05);
            assert!(s.v[0].abs() <= 0.5 && s.v[1].abs() <= 0.5);
        }
        assert_eq!(s.v, [0.5, -0.5]);
        assert_eq!(s.w, [0.75, -0.75]);
    }

    fn inputs<'a>(
        estimate: &'a PendulumState,
        q: &'a Vector3<f64>,
        geometry: &'a CraneGeometry,
        tip: PlanarState,
        reference: PlanarState,
    ) -> ControlInputs<'a> {
        ControlInputs {
            estimate,
            length: 1.05,
            gravity: G,
            tip,
            reference,
            damping_on: true,
            q,
            geometry,
            max_condition: DEFAULT_MAX_CONDITION,
            dt: 0.05,
        }
    }

    #[test]
    fn at_reference_and_still_commands_nothing() {
        let geom = CraneGeometry::default();
        let q = nominal_configuration(0.5, &geom);
        let p = forward_kinematics(&q, &geom).unwrap();
        let est = PendulumState::default();
        let tip = [p.x, p.y, 0.0, 0.0];
        let out = control_tick(
            &inputs(&est, &q, &geom, tip, tip),
            &ControllerGains::default(),
            &VelocityLoopState::default(),
        )
        .unwrap();
        assert_eq!(out.joint_rates, Vector3::zeros());
        assert_eq!(out.vdot, [0.0, 0.0]);
    }

    #[test]
    fn commanded_tip_velocity_is_horizontal() {
        let geom = CraneGeometry::default();
        let q = nominal_configuration(0.5, &geom);
        let p = forward_kinematics(&q, &geom).unwrap();
        let est = PendulumState::new(0.1, -0.05, 0.3, 0.2);
        let tip = [p.x, p.y, 0.0, 0.0];
        let reference = [p.x + 0.3, p.y - 0.2, 0.0, 0.0];
        let gains = ControllerGains::default();
        let mut vls = VelocityLoopState::default();
        for _ in 0..5 {
            let out = control_tick(&inputs(&est, &q, &geom, tip, reference), &gains, &vls).unwrap();
            let v = ChainFrames::compute(&q, &geom).unwrap().jacobian() * out.joint_rates;
            assert!(v.z.abs() < 1e-12);
            assert_relative_eq!(v.x, out.velocity_loop.v[0], epsilon = 1e-12);
            assert_relative_eq!(v.y, out.velocity_loop.v[1], epsilon = 1e-12);
            vls = out.velocity_loop;
        }
    }

    #[test]
    fn damping_flag_bypasses_rate_feedback() {
        let geom = CraneGeometry::default();
        let q = nominal_configuration(0.5, &geom);
        let est = PendulumState::new(0.0, 0.0, 0.4, 0.0);
        let tip = [1.0, 1.0, 0.0, 0.0];
        let mut inp = inputs(&est, &q, &geom, tip, tip);
        inp.damping_on = false;
        let gains = ControllerGains::default();
        let off = control_tick(&inp, &gains, &VelocityLoopState::default()).unwrap();
        assert_eq!(off.accel_cmd, [0.0, 0.0]);
        inp.damping_on = true;
        let on = control_tick(&inp, &gains, &VelocityLoopState::default()).unwrap();
        assert!(on.accel_cmd[1] < 0.0);
    }

    /// Closed loop along one axis with the linearized payload:
    /// `xddot = 2 L zeta w0 phidot + u`, `phiddot = -w0^2 phi - xddot / L`.
    fn linear_axis_response(reference: impl Fn(f64) -> (f64, f64), seconds: f64) -> Vec<(f64, f64)> {
        let (l, zeta) = (1.05, 0.2);
        let w0 = (G / l).sqrt();
        let (kp, kd) = ControllerGains::default().outer_gains(w0);
        let dt = 1e-3;
        let (mut x, mut xd, mut phi, mut phid) = (0.0, 0.0, 0.0, 0.0);
        let mut out = Vec::new();
        let steps = (seconds / dt) as usize;
        for k in 0..steps {
            let t = k as f64 * dt;
            let (r, rd) = reference(t);
            let u = kp * (r - x) + kd * (rd - xd);
            let acc = 2.0 * l * zeta * w0 * phid + u;
            let phidd = -w0 * w0 * phi - acc / l;
            x += xd * dt + 0.5 * acc * dt * dt;
            xd += acc * dt;
            phi += phid * dt + 0.5 * phidd * dt * dt;
            phid += phidd * dt;
            out.push((t, x));
        }
        out
    }

    #[test]
    fn inner_loop_poles() {
        // s^2 + 2 zeta w0 s + w0^2 has roots -zeta w0 +- j w0 sqrt(1 - zeta^2)
        let (zeta, w0) = (0.2, (G / 1.05f64).sqrt());
        let re = -zeta * w0;
        let im = w0 * (1.0 - zeta * zeta).sqrt();
        let poly = |sr: f64, si: f64| {
            let (s2r, s2i) = (sr * sr - si * si, 2.0 * sr * si);
            (s2r + 2.0 * zeta * w0 * sr + w0 * w0, s2i + 2.0 * zeta * w0 * si)
        };
        let (pr, pi) = poly(re, im);
        assert!(pr.abs() < 1e-12 && pi.abs() < 1e-12);
    }

    #[test]
    fn step_reference_has_no_steady_state_error() {
        let trace = linear_axis_response(|_| (0.5, 0.0), 60.0);
        let (_, x) = trace.last().copied().unwrap();
        assert!((x - 0.5).abs() < 1e-3, "x = {x}");
    }

    #[test]
    fn reference_at_pendulum_frequency_is_notched() {
        let w0 = (G / 1.05f64).sqrt();
        let amplitude = |w: f64| {
            let trace = linear_axis_response(move |t| (0.1 * (w * t).sin(), 0.1 * w * (w * t).cos()), 120.0);
            trace
                .iter()
                .filter(|(t, _)| *t > 80.0)
                .map(|(_, x)| x.abs())
                .fold(0.0, f64::max)
        };
        let low = amplitude(0.05 * w0);
        let notch = amplitude(w0);
        assert!(notch / low < 0.1, "notch {notch}, low {low}");
    }
}
