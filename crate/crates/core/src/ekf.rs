//! Extended Kalman filter for the payload angles, rates and the two
//! measurement bias states.
//!
//! State `z = [phi_x, phi_y, phidot_x, phidot_y, n_x, n_y]`, input
//! `a = [vdot_x, vdot_y]`, measurement `y = [phi_x + n_x, phi_y + n_y]`.
//! The process model is the forward-Euler discretization of the pendulum
//! dynamics with the biases as random walks.

use serde::Deserialize;
use nalgebra::{Matrix2, Matrix2x6, Matrix6, Matrix6x2, SymmetricEigen, Vector2, Vector6};

use crate::error::{Error, Result};
use crate::pendulum::{check_cone, pendulum_accel, PendulumState};

pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

pub type StateVector = Vector6<f64>;
pub type Covariance = Matrix6<f64>;

/// Process noise used in the laboratory runs.
pub fn default_process_noise() -> Covariance {
    Matrix6::from_diagonal(&Vector6::new(0.3, 0.3, 5.0, 5.0, 1.0, 1.0)) * 1e-4
}

/// Measurement noise used in the laboratory runs.
pub fn default_measurement_noise() -> Matrix2<f64> {
    Matrix2::new(3.77597, -2.10312, -2.10312, 1.25147) * 1e-3
}

/// Constant measurement Jacobian.
pub fn measurement_matrix() -> Matrix2x6<f64> {
    Matrix2x6::new(
        1.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
    )
}

/// One-step discretization of the pendulum model used for prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `z_next = z + f(z) dt`.
    ForwardEuler,
    /// Rates first, then the angles with the updated rates. Keeps the
    /// undamped swing amplitude constant at coarse steps where forward
    /// Euler grows it by a factor `sqrt(1 + (w0 dt)^2)` per step.
    #[default]
    SemiImplicitEuler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub z: StateVector,
    pub p: Covariance,
    pub q: Covariance,
    pub r: Matrix2<f64>,
    pub dt: f64,
    pub scheme: Discretization,
}

impl EkfState {
    pub fn new(z: StateVector, p: Covariance, q: Covariance, r: Matrix2<f64>, dt: f64) -> Self {
        Self {
            z,
            p,
            q,
            r,
            dt,
            scheme: Discretization::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Discretization) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn pendulum(&self) -> PendulumState {
        PendulumState::new(self.z[0], self.z[1], self.z[2], self.z[3])
    }

    pub fn bias(&self) -> [f64; 2] {
        [self.z[4], self.z[5]]
    }
}

/// Discrete process model `z_next = f_k(z, a)` and its Jacobian `F`.
///
/// Forward Euler gives `F = I + A dt`. The semi-implicit scheme advances
/// the angles with the updated rates, so its angle rows pick up
/// `dt^2` times the rate rows of `A`.
pub fn process_model(
    z: &StateVector,
    accel: [f64; 2],
    length: f64,
    gravity: f64,
    dt: f64,
    scheme: Discretization,
) -> Result<(StateVector, Covariance)> {
    check_cone(z[1])?;
    let pend = PendulumState::new(z[0], z[1], z[2], z[3]);
    let [ddx, ddy] = pendulum_accel(&pend, accel, length, gravity)?;
    let rate = Vector6::new(z[2], z[3], ddx, ddy, 0.0, 0.0);

    let w2 = gravity / length;
    let [ax, ay] = accel;
    let (sx, cx) = z[0].sin_cos();
    let (sy, cy) = z[1].sin_cos();
    let (dx, dy) = (z[2], z[3]);
    let numerator_x = 2.0 * dx * dy * sy + ay * cx / length - w2 * sx;

    let mut a = Matrix6::zeros();
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;

    a[(2, 0)] = (-ay * sx / length - w2 * cx) / cy;
    a[(2, 1)] = 2.0 * dx * dy + numerator_x * sy / (cy * cy);
    a[(2, 2)] = 2.0 * dy * sy / cy;
    a[(2, 3)] = 2.0 * dx * sy / cy;

    a[(3, 0)] = w2 * sx * sy - ay * cx * sy / length;
    a[(3, 1)] = -w2 * cx * cy - dx * dx * (cy * cy - sy * sy) - (-ax * sy + ay * sx * cy) / length;
    a[(3, 2)] = -2.0 * dx * sy * cy;

    let mut next = z + rate * dt;
    let mut f = Matrix6::identity() + a * dt;
    if scheme == Discretization::SemiImplicitEuler {
        next[0] += ddx * dt * dt;
        next[1] += ddy * dt * dt;
        for c in 0..6 {
            f[(0, c)] += a[(2, c)] * dt * dt;
            f[(1, c)] += a[(3, c)] * dt * dt;
        }
    }
    Ok((next, f))
}

fn symmetrize(p: &Covariance) -> Covariance {
    (p + p.transpose()) * 0.5
}

/// Time update with the input applied over the previous interval.
pub fn ekf_predict(s: &EkfState, accel: [f64; 2], length: f64, gravity: f64) -> Result<EkfState> {
    let (z, f) = process_model(&s.z, accel, length, gravity, s.dt, s.scheme)?;
    let p = symmetrize(&(f * s.p * f.transpose() + s.q));
    Ok(EkfState { z, p, ..s.clone() })
}

/// Measurement update with the angle measurement `y`.
pub fn ekf_update(s: &EkfState, y: [f64; 2]) -> Result<EkfState> {
    let h = measurement_matrix();
    let innovation_cov = s.r + h * s.p * h.transpose();
    let sv = innovation_cov.singular_values();
    let condition = if sv.min() > 0.0 {
        sv.max() / sv.min()
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(Error::IllConditionedInnovation { condition });
    }
    let inv = innovation_cov
        .try_inverse()
        .ok_or(Error::IllConditionedInnovation { condition })?;
    let gain: Matrix6x2<f64> = s.p * h.transpose() * inv;
    let innovation = Vector2::new(y[0], y[1]) - h * s.z;
    let z = s.z + gain * innovation;
    let p = symmetrize(&((Matrix6::identity() - gain * h) * s.p));
    Ok(EkfState { z, p, ..s.clone() })
}

/// Kalman gain the next update would use; exposed for diagnostics.
pub fn kalman_gain(s: &EkfState) -> Option<Matrix6x2<f64>> {
    let h = measurement_matrix();
    let inv = (s.r + h * s.p * h.transpose()).try_inverse()?;
    Some(s.p * h.transpose() * inv)
}

/// Innovation `y - H z` against the current (predicted) state.
pub fn innovation(s: &EkfState, y: [f64; 2]) -> Vector2<f64> {
    Vector2::new(y[0], y[1]) - measurement_matrix() * s.z
}

/// Smallest eigenvalue of the symmetric part of `p`.
pub fn min_eigenvalue(p: &Covariance) -> f64 {
    SymmetricEigen::new(symmetrize(p)).eigenvalues.min()
}
