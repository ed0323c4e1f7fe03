//! Online cable length identification.
//!
//! The linearized swing in the `phi_x` plane, `phi_x'' = (-g phi_x + vdot_y) / L`,
//! is filtered through `1 / (s + lambda0)` on both sides to obtain the linear
//! parametric model `z = eta* psi` with `eta* = 1 / L`. The estimate of `eta`
//! follows a least-squares law with forgetting factor, and is projected onto
//! the convex set `1 / L_max <= eta <= 1 / L_min`.

use serde::Deserialize;

use crate::error::{Error, Result};

/// First-order low-pass `x' = -lambda x + u`, discretized exactly for an
/// input that varies linearly between samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFilter {
    pub lambda: f64,
    pub state: f64,
    last_input: Option<f64>,
}

impl FirstOrderFilter {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            state: 0.0,
            last_input: None,
        }
    }

    /// Advances by `dt` to the sample `input` and returns the new output.
    pub fn step(&mut self, input: f64, dt: f64) -> f64 {
        let prev = self.last_input.unwrap_or(input);
        let lh = self.lambda * dt;
        let decay = (-lh).exp();
        // (1 - e^{-lh}) / (lh), evaluated stably for small lh
        let ratio = if lh > 1e-8 { -(-lh).exp_m1() / lh } else { 1.0 - 0.5 * lh };
        let b_prev = (ratio - decay) / self.lambda;
        let b_next = (1.0 - ratio) / self.lambda;
        self.state = decay * self.state + b_prev * prev + b_next * input;
        self.last_input = Some(input);
        self.state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorParams {
    /// Pole of the regressor filter `s + lambda0` [1/s].
    pub lambda0: f64,
    /// Forgetting factor [1/s].
    pub beta: f64,
    /// Initial adaptive gain.
    pub gamma0: f64,
    /// Initial length guess [m].
    pub initial_length: f64,
    pub min_length: f64,
    pub max_length: f64,
    /// Time constant of the low-pass filter on the length estimate [s].
    pub output_time_constant: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            beta: 0.5,
            gamma0: 100.0,
            initial_length: 0.5,
            min_length: 0.3,
            max_length: 1.5,
            output_time_constant: 2.0,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_length > self.min_length && self.min_length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "length bounds must satisfy 0 < min < max, got [{}, {}]",
                self.min_length, self.max_length
            )));
        }
        if !(self.initial_length >= self.min_length && self.initial_length <= self.max_length) {
            return Err(Error::InvalidParameter(format!(
                "initial length {} is outside [{}, {}]",
                self.initial_length, self.min_length, self.max_length
            )));
        }
        for (name, value) in [
            ("lambda0", self.lambda0),
            ("beta", self.beta),
            ("gamma0", self.gamma0),
            ("output_time_constant", self.output_time_constant),
        ] {
            if !(value > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthEstimatorState {
    /// Estimate of `1 / L` [1/m].
    pub eta: f64,
    pub gamma: f64,
    /// Low-pass of `phidot_x`, used to form `z = phidot_x - lambda0 LP(phidot_x)`.
    pub rate_filter: FirstOrderFilter,
    /// Low-pass of `-g phi_x + vdot_y`, which is `psi` itself.
    pub regressor_filter: FirstOrderFilter,
    pub beta: f64,
    pub min_length: f64,
    pub max_length: f64,
    /// Low-pass filtered length estimate [m].
    pub filtered_length: f64,
    pub output_time_constant: f64,
    pub gravity: f64,
}

impl LengthEstimatorState {
    pub fn new(params: &EstimatorParams, gravity: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            eta: 1.0 / params.initial_length,
            gamma: params.gamma0,
            rate_filter: FirstOrderFilter::new(params.lambda0),
            regressor_filter: FirstOrderFilter::new(params.lambda0),
            beta: params.beta,
            min_length: params.min_length,
            max_length: params.max_length,
            filtered_length: params.initial_length,
            output_time_constant: params.output_time_constant,
            gravity,
        })
    }

    pub fn length(&self) -> f64 {
        1.0 / self.eta
    }

    pub fn eta_bounds(&self) -> (f64, f64) {
        (1.0 / self.max_length, 1.0 / self.min_length)
    }
}

/// Filtered signals `(z, psi)` of the parametric model, computed without
/// differentiating any measurement.
pub fn filter_signals(
    phi_x: f64,
    phidot_x: f64,
    vdot_y: f64,
    st: &mut LengthEstimatorState,
    dt: f64,
) -> (f64, f64) {
    let lambda0 = st.rate_filter.lambda;
    let z = phidot_x - lambda0 * st.rate_filter.step(phidot_x, dt);
    let psi = st
        .regressor_filter
        .step(-st.gravity * phi_x + vdot_y, dt);
    (z, psi)
}

/// Admissible-set function `g(eta)` (non-positive inside the bounds) and
/// its gradient.
pub fn constraint_g(eta: f64, min_length: f64, max_length: f64) -> (f64, f64) {
    let sum = (max_length + min_length) / (max_length * min_length);
    let prod = 1.0 / (max_length * min_length);
    (eta * eta - eta * sum + prod, 2.0 * eta - sum)
}

const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// One step of the least-squares law with projection, followed by the
/// low-pass update of the length estimate.
pub fn estimator_step(st: &LengthEstimatorState, z: f64, psi: f64, dt: f64) -> LengthEstimatorState {
    let mut next = st.clone();
    let ms2 = 1.0 + st.gamma * psi * psi;
    let eps = (z - st.eta * psi) / ms2;
    let update = st.gamma * eps * psi;
    let (g, grad) = constraint_g(st.eta, st.min_length, st.max_length);
    let interior = g < -BOUNDARY_TOLERANCE;
    let pointing_inward = update * grad <= 0.0;
    if interior || pointing_inward {
        let gamma_rate = st.beta * st.gamma - st.gamma * st.gamma * psi * psi / ms2;
        next.eta = st.eta + update * dt;
        next.gamma = st.gamma + gamma_rate * dt;
    }
    let (lo, hi) = st.eta_bounds();
    next.eta = next.eta.clamp(lo, hi);
    let blend = -(-dt / st.output_time_constant).exp_m1();
    next.filtered_length += blend * (next.length() - next.filtered_length);
    next
}
