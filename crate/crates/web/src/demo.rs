use crane_lab::kinematics::{nominal_configuration, CraneGeometry, JointState};
use crane_lab::pendulum::{PendulumState, SimState};
use crane_lab::scenario::{run_scenario, RunResult, ScenarioConfig};
use crane_lab::vision::{marker_world_positions, project_marker, CameraRig};
use crane_lab::{Error, Result};

pub const DAMPING_STRIDE: usize = 4;
pub const LENGTH_STRIDE: usize = 4;

const DAMPING_ON: f64 = 2.0;
const DAMPING_DURATION: f64 = 25.0;
const LENGTH_DURATION: f64 = 30.0;

fn base_config(id: &str, seed: u64, initial_angle_deg: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        id: id.into(),
        seed,
        ..ScenarioConfig::default()
    };
    cfg.initial.tip = Some([1.27, 1.27]);
    cfg.initial.phi_x_deg = initial_angle_deg;
    cfg
}

fn completed(run: RunResult) -> Result<RunResult> {
    match run.aborted {
        Some(e) => Err(e),
        None => Ok(run),
    }
}

/// Free swing that the damping controller takes over after two seconds.
pub fn damping_trace(zeta: f64, initial_angle_deg: f64, seed: u64) -> Result<Vec<f64>> {
    let mut cfg = base_config("demo-damping", seed, initial_angle_deg);
    cfg.duration = DAMPING_DURATION;
    cfg.controller.zeta = zeta;
    cfg.estimator.initial_length = cfg.payload.length;
    cfg.events.damping_on = Some(DAMPING_ON);
    let run = completed(run_scenario(&cfg)?)?;

    let w0 = cfg.payload.natural_frequency();
    let start = run
        .trace
        .records
        .iter()
        .find(|r| r.damping_on)
        .ok_or_else(|| Error::InvalidParameter("damping never switched on".into()))?;
    let amplitude = start.phi_x.hypot(start.phidot_x / w0);
    let mut out = Vec::with_capacity(run.trace.records.len() * DAMPING_STRIDE);
    for r in &run.trace.records {
        let envelope = if r.t >= start.t {
            (amplitude * (-zeta * w0 * (r.t - start.t)).exp()).to_degrees()
        } else {
            f64::NAN
        };
        out.extend([r.t, r.phi_x.to_degrees(), r.phi_y.to_degrees(), envelope]);
    }
    Ok(out)
}

/// Free swing with the length estimator starting from `initial_length`.
pub fn length_trace(initial_angle_deg: f64, initial_length: f64, seed: u64) -> Result<Vec<f64>> {
    let mut cfg = base_config("demo-length", seed, initial_angle_deg);
    cfg.duration = LENGTH_DURATION;
    cfg.estimator.initial_length = initial_length;
    let run = completed(run_scenario(&cfg)?)?;
    let truth = cfg.payload.length;
    Ok(run
        .trace
        .records
        .iter()
        .flat_map(|r| [r.t, r.length_filtered, r.length, truth])
        .collect())
}

/// Noise-free marker pixels for the crane in its nominal pose.
pub fn camera_view(slew: f64, phi_x_deg: f64, phi_y_deg: f64) -> Result<Vec<f64>> {
    let geom = CraneGeometry::default();
    let rig = CameraRig::default();
    let sim = SimState {
        joints: JointState::at_rest(nominal_configuration(slew, &geom)),
        pendulum: PendulumState::new(phi_x_deg.to_radians(), phi_y_deg.to_radians(), 0.0, 0.0),
    };
    let markers = marker_world_positions(&sim, &rig, &geom)?;
    let mut out = Vec::with_capacity(12);
    for cam in rig.cameras(slew) {
        for marker in &markers {
            match project_marker(marker, &cam) {
                Ok(p) if p.in_frame => out.extend(p.pixel),
                Ok(_) | Err(Error::BehindCamera { .. }) => out.extend([f64::NAN, f64::NAN]),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}
