use std::path::Path;

use nalgebra::{Matrix2, Matrix6, Vector3, Vector6};
use serde::Deserialize;

use crate::cable::EstimatorParams;
use crate::control::ControllerGains;
use crate::ekf::{default_measurement_noise, default_process_noise, Discretization};
use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, inverse_kinematics, nominal_configuration, CraneGeometry, DEFAULT_MAX_CONDITION,
    NOMINAL_HEIGHT,
};
use crate::pendulum::PayloadParams;
use crate::vision::CameraRig;

/// Full description of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub id: String,
    pub seed: u64,
    /// Simulated time [s].
    pub duration: f64,
    pub physics_dt: f64,
    /// Period of the vision, estimation and control tick [s].
    pub control_period: f64,
    /// Joint-rate servo time constant [s].
    pub actuator_lag: f64,
    /// Largest tip Jacobian condition number accepted by the controller.
    pub max_condition: f64,
    pub geometry: CraneGeometry,
    pub payload: PayloadParams,
    pub rig: CameraRig,
    pub initial: InitialConditions,
    pub reference: Vec<Waypoint>,
    pub controller: ControllerGains,
    pub estimator: EstimatorParams,
    pub ekf: EkfConfig,
    pub events: Events,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            id: "scenario".into(),
            seed: 0,
            duration: 30.0,
            physics_dt: 0.001,
            control_period: 0.05,
            actuator_lag: 0.02,
            max_condition: DEFAULT_MAX_CONDITION,
            geometry: CraneGeometry::default(),
            payload: PayloadParams::default(),
            rig: CameraRig::default(),
            initial: InitialConditions::default(),
            reference: Vec::new(),
            controller: ControllerGains::default(),
            estimator: EstimatorParams::default(),
            ekf: EkfConfig::default(),
            events: Events::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConditions {
    /// Explicit joint coordinates `[q1, q2, q3]`. When absent the joints
    /// are solved from `tip` and `tip_height`.
    pub joints: Option<[f64; 3]>,
    /// Horizontal tip position `[x, y]` [m].
    pub tip: Option<[f64; 2]>,
    /// Tip height above the crane base [m].
    pub tip_height: f64,
    pub phi_x_deg: f64,
    pub phi_y_deg: f64,
    pub phidot_x: f64,
    pub phidot_y: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            joints: None,
            tip: None,
            tip_height: NOMINAL_HEIGHT,
            phi_x_deg: 0.0,
            phi_y_deg: 0.0,
            phidot_x: 0.0,
            phidot_y: 0.0,
        }
    }
}

/// Step change of the tip reference at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EkfConfig {
    pub process_noise_diag: [f64; 6],
    pub measurement_noise: [[f64; 2]; 2],
    pub initial_covariance_diag: [f64; 6],
    pub discretization: Discretization,
}

impl Default for EkfConfig {
    fn default() -> Self {
        let q = default_process_noise();
        let r = default_measurement_noise();
        Self {
            process_noise_diag: std::array::from_fn(|i| q[(i, i)]),
            measurement_noise: [[r[(0, 0)], r[(0, 1)]], [r[(1, 0)], r[(1, 1)]]],
            initial_covariance_diag: [0.0; 6],
            discretization: Discretization::default(),
        }
    }
}

impl EkfConfig {
    pub fn process_noise(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from_column_slice(&self.process_noise_diag))
    }

    pub fn measurement_noise(&self) -> Matrix2<f64> {
        let r = self.measurement_noise;
        Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub fn initial_covariance(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from_column_slice(&self.initial_covariance_diag))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Events {
    /// Time the payload damping term is switched on [s].
    pub damping_on: Option<f64>,
    pub damping_off: Option<f64>,
    /// Hold the length estimate constant while damping is active.
    pub freeze_with_damping: bool,
}

impl Default for Events {
    fn default() -> Self {
        Self {
            damping_on: None,
            damping_off: None,
            freeze_with_damping: true,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_value(value: toml::Value) -> Result<Self> {
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| Error::InvalidParameter(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Physics steps per control tick.
    pub fn steps_per_tick(&self) -> usize {
        (self.control_period / self.physics_dt).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        (self.duration / self.physics_dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.physics_dt > 0.0 && self.control_period >= self.physics_dt) {
            return bad("need 0 < physics_dt <= control_period".into());
        }
        let ratio = self.control_period / self.physics_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!(
                "control_period {} is not a whole number of physics steps of {}",
                self.control_period, self.physics_dt
            ));
        }
        if !(self.actuator_lag > 0.0 && self.max_condition > 1.0) {
            return bad("actuator_lag must be positive and max_condition above 1".into());
        }
        let within = |name: &str, t: f64| {
            if t >= 0.0 && t <= self.duration {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} time {t} lies outside [0, {}]",
                    self.duration
                )))
            }
        };
        for w in &self.reference {
            within("reference", w.t)?;
        }
        if self.reference.windows(2).any(|w| w[1].t < w[0].t) {
            return bad("reference waypoints must be sorted by time".into());
        }
        if let Some(t) = self.events.damping_on {
            within("damping_on", t)?;
        }
        if let Some(t) = self.events.damping_off {
            within("damping_off", t)?;
        }
        self.geometry.validate()?;
        self.payload.validate()?;
        self.rig.validate()?;
        self.controller.validate()?;
        self.estimator.validate()?;
        let diag_ok = self.ekf.process_noise_diag.iter().all(|v| *v >= 0.0)
            && self.ekf.initial_covariance_diag.iter().all(|v| *v >= 0.0);
        let r = self.ekf.measurement_noise();
        if !diag_ok || r[(0, 1)] != r[(1, 0)] || !(r[(0, 0)] > 0.0 && r.determinant() > 0.0) {
            return bad("EKF covariances must be symmetric positive (semi)definite".into());
        }
        self.initial_joints().map(|_| ())
    }

    /// Joint coordinates at `t = 0`.
    pub fn initial_joints(&self) -> Result<Vector3<f64>> {
        if let Some(q) = self.initial.joints {
            let q = Vector3::from(q);
            forward_kinematics(&q, &self.geometry)?;
            return Ok(q);
        }
        match self.initial.tip {
            None => Ok(nominal_configuration(0.0, &self.geometry)),
            Some([x, y]) => {
                // q1 = 0 points the boom along the inertial y axis.
                let q1 = x.atan2(y);
                let guess = nominal_configuration(q1, &self.geometry);
                inverse_kinematics(&Vector3::new(x, y, -self.initial.tip_height), &guess, &self.geometry)
            }
        }
    }

    /// Tip reference in force at time `t`, or `None` to hold the start.
    pub fn reference_at(&self, t: f64) -> Option<[f64; 2]> {
        self.reference
            .iter()
            .take_while(|w| w.t <= t)
            .last()
            .map(|w| [w.x, w.y])
    }

    pub fn damping_active(&self, t: f64) -> bool {
        let on = self.events.damping_on.is_some_and(|t_on| t >= t_on);
        let off = self.events.damping_off.is_some_and(|t_off| t >= t_off);
        on && !off
    }
}

/// Sets a dotted `section.key` path inside a TOML document, creating
/// intermediate tables as needed.
pub fn set_dotted(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut node = doc;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidParameter(format!("{path}: {part} is not inside a table")))?;
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Err(Error::InvalidParameter("empty override path".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.steps_per_tick(), 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ScenarioConfig::from_toml_str("durration = 3.0").is_err());
        assert!(ScenarioConfig::from_toml_str("[payload]\nlenght = 1.0").is_err());
    }

    #[test]
    fn parses_sections() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            id = "demo"
            duration = 40.0
            [initial]
            tip = [1.27, 1.27]
            phi_x_deg = 10.0
            [[reference]]
            t = 1.0
            x = 0.70
            y = 1.80
            [events]
            damping_on = 20.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.reference_at(0.5), None);
        assert_eq!(cfg.reference_at(1.0), Some([0.70, 1.80]));
        assert!(!cfg.damping_active(19.9) && cfg.damping_active(20.0));
        let tip = forward_kinematics(&cfg.initial_joints().unwrap(), &cfg.geometry).unwrap();
        assert_relative_eq!(tip.x, 1.27, epsilon = 1e-9);
        assert_relative_eq!(tip.y, 1.27, epsilon = 1e-9);
        assert_relative_eq!(tip.z, -NOMINAL_HEIGHT, epsilon = 1e-9);
    }

    #[test]
    fn rejects_events_outside_duration() {
        assert!(ScenarioConfig::from_toml_str("duration = 10.0\n[events]\ndamping_on = 12.0").is_err());
        assert!(ScenarioConfig::from_toml_str("duration = -1.0").is_err());
        assert!(ScenarioConfig::from_toml_str("control_period = 0.0505").is_err());
    }

    #[test]
    fn dotted_override() {
        let mut doc: toml::Value = toml::from_str("[estimator]\nbeta = 0.5").unwrap();
        set_dotted(&mut doc, "estimator.initial_length", toml::Value::Float(0.7)).unwrap();
        set_dotted(&mut doc, "initial.phi_x_deg", toml::Value::Float(5.0)).unwrap();
        let cfg = ScenarioConfig::from_toml_value(doc).unwrap();
        assert_eq!(cfg.estimator.initial_length, 0.7);
        assert_eq!(cfg.estimator.beta, 0.5);
        assert_eq!(cfg.initial.phi_x_deg, 5.0);
    }
}
