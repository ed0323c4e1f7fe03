//! Closed-loop scenario execution: physics at the fine step, vision,
//! estimation and control at the coarse tick, CSV traces and metrics.

mod config;
mod metrics;
mod sweep;
mod trace;

pub use config::{set_dotted, EkfConfig, Events, InitialConditions, ScenarioConfig, Waypoint};
pub use metrics::{
    convergence_time, evaluate_metrics, fit_decay, Convergence, DecayFit, MetricsReport, LENGTH_BAND,
};
pub use sweep::{expand_grid, load_grid, sweep, ParameterGrid, SweepCell};
pub use trace::{read_csv, write_csv, Trace, TraceMeta, TraceRecord, COLUMNS, SCHEMA_VERSION};

use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cable::{estimator_step, filter_signals, LengthEstimatorState};
use crate::control::{control_tick, ControlInputs, VelocityLoopState};
use crate::ekf::{ekf_predict, ekf_update, EkfState};
use crate::error::{Error, Result};
use crate::kinematics::{ChainFrames, JointState};
use crate::pendulum::{PendulumState, Plant, SimState};
use crate::vision::{measure_frame, VisionMeasurement};

/// Outcome of a run. `aborted` holds the error that stopped the
/// simulation early; the trace then ends at the last completed tick.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: Trace,
    pub aborted: Option<Error>,
}

/// Iterates the physics step indices at which a control tick happens.
/// Tick times are `index * dt`, so they never accumulate rounding drift.
pub fn tick_indices(total_steps: usize, steps_per_tick: usize) -> impl Iterator<Item = usize> {
    (0..=total_steps).step_by(steps_per_tick.max(1))
}

struct Loop<'a> {
    cfg: &'a ScenarioConfig,
    plant: Plant,
    sim: SimState,
    rng: ChaCha8Rng,
    ekf: EkfState,
    estimator: LengthEstimatorState,
    velocity: VelocityLoopState,
    last_vdot: [f64; 2],
    command: Vector3<f64>,
    hold: [f64; 2],
    ticks: usize,
}

impl<'a> Loop<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let plant = Plant::new(cfg.geometry.clone(), cfg.payload, cfg.actuator_lag)?;
        let q0 = cfg.initial_joints()?;
        let start = ChainFrames::compute(&q0, &cfg.geometry)?.tip();
        let init = &cfg.initial;
        let sim = SimState {
            joints: JointState::at_rest(q0),
            pendulum: PendulumState::new(
                init.phi_x_deg.to_radians(),
                init.phi_y_deg.to_radians(),
                init.phidot_x,
                init.phidot_y,
            ),
        };
        let ekf = EkfState::new(
            Vector6::zeros(),
            cfg.ekf.initial_covariance(),
            cfg.ekf.process_noise(),
            cfg.ekf.measurement_noise(),
            cfg.control_period,
        )
        .with_scheme(cfg.ekf.discretization);
        Ok(Self {
            cfg,
            sim,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            ekf,
            estimator: LengthEstimatorState::new(&cfg.estimator, cfg.payload.gravity)?,
            velocity: VelocityLoopState::default(),
            last_vdot: [0.0; 2],
            command: Vector3::zeros(),
            hold: [start.x, start.y],
            ticks: 0,
            plant,
        })
    }

    fn tick(&mut self, t: f64) -> Result<TraceRecord> {
        let cfg = self.cfg;
        let g = cfg.payload.gravity;
        let dt = cfg.control_period;

        let measurement = match measure_frame(&self.sim, &cfg.rig, &cfg.geometry, &mut self.rng) {
            Ok(m) => Some(m),
            Err(Error::InsufficientViews { .. } | Error::DegenerateGeometry | Error::CoincidentMarkers) => None,
            Err(e) => return Err(e),
        };

        if self.ticks > 0 {
            self.ekf = ekf_predict(&self.ekf, self.last_vdot, self.estimator.filtered_length, g)?;
        }
        if let Some(m) = &measurement {
            self.ekf = ekf_update(&self.ekf, m.angles)?;
        }
        let estimate = self.ekf.pendulum();

        let joints = &self.sim.joints;
        let frames = ChainFrames::compute(&joints.q, &cfg.geometry)?;
        let tip = frames.tip();
        let tip_vel = frames.jacobian() * joints.qdot;
        let reference = cfg.reference_at(t).unwrap_or(self.hold);
        let damping_on = cfg.damping_active(t);
        let frozen = damping_on && cfg.events.freeze_with_damping;

        let out = control_tick(
            &ControlInputs {
                estimate: &estimate,
                length: self.estimator.filtered_length,
                gravity: g,
                tip: [tip.x, tip.y, tip_vel.x, tip_vel.y],
                reference: [reference[0], reference[1], 0.0, 0.0],
                damping_on,
                q: &joints.q,
                geometry: &cfg.geometry,
                max_condition: cfg.max_condition,
                dt,
            },
            &cfg.controller,
            &self.velocity,
        )?;
        // acceleration over the interval the new command is held
        let vdot = [
            (out.velocity_loop.v[0] - self.velocity.v[0]) / dt,
            (out.velocity_loop.v[1] - self.velocity.v[1]) / dt,
        ];
        self.command = out.joint_rates;
        self.velocity = out.velocity_loop;
        self.last_vdot = vdot;

        if !frozen {
            let (z, psi) = filter_signals(estimate.phi_x, estimate.phidot_x, vdot[1], &mut self.estimator, dt);
            self.estimator = estimator_step(&self.estimator, z, psi, dt);
        }
        self.ticks += 1;

        let truth = &self.sim.pendulum;
        let (y, sigma4) = match measurement {
            Some(VisionMeasurement { angles, sigma4 }) => (angles, sigma4),
            None => ([f64::NAN; 2], [f64::NAN; 2]),
        };
        let z = &self.ekf.z;
        let est = &self.estimator;
        Ok(TraceRecord {
            t,
            phi_x: truth.phi_x,
            phi_y: truth.phi_y,
            phidot_x: truth.phidot_x,
            phidot_y: truth.phidot_y,
            phi_x_hat: z[0],
            phi_y_hat: z[1],
            phidot_x_hat: z[2],
            phidot_y_hat: z[3],
            n_x_hat: z[4],
            n_y_hat: z[5],
            y1: y[0],
            y2: y[1],
            sigma4_m1: sigma4[0],
            sigma4_m2: sigma4[1],
            tip_x: tip.x,
            tip_y: tip.y,
            tip_z: tip.z,
            ref_x: reference[0],
            ref_y: reference[1],
            v_x: out.velocity_loop.v[0],
            v_y: out.velocity_loop.v[1],
            w_x: out.velocity_loop.w[0],
            w_y: out.velocity_loop.w[1],
            vdot_x: vdot[0],
            vdot_y: vdot[1],
            eta: est.eta,
            gamma: est.gamma,
            length: est.length(),
            length_filtered: est.filtered_length,
            damping_on,
            estimate_frozen: frozen,
            vision_valid: measurement.is_some(),
        })
    }
}

/// Runs the closed loop for `cfg.duration` seconds. Returns an error only
/// for an invalid configuration; failures during the run end it early and
/// are reported in [`RunResult::aborted`].
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    let mut lp = Loop::new(cfg)?;
    let total = cfg.total_steps();
    let per_tick = cfg.steps_per_tick();
    let mut records = Vec::with_capacity(total / per_tick + 1);
    let mut aborted = None;
    let mut step = 0;
    'ticks: for tick_step in tick_indices(total, per_tick) {
        while step < tick_step {
            match lp.plant.step(&lp.sim, &lp.command, cfg.physics_dt) {
                Ok(next) => lp.sim = next,
                Err(e) => {
                    aborted = Some(e);
                    break 'ticks;
                }
            }
            step += 1;
        }
        match lp.tick(tick_step as f64 * cfg.physics_dt) {
            Ok(r) => records.push(r),
            Err(e) => {
                aborted = Some(e);
                break;
            }
        }
    }
    Ok(RunResult {
        trace: Trace {
            meta: TraceMeta {
                scenario_id: cfg.id.clone(),
                seed: cfg.seed,
                true_length: cfg.payload.length,
                aborted: aborted.as_ref().map(|e| e.to_string()),
            },
            records,
        },
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(text: &str) -> ScenarioConfig {
        ScenarioConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn tick_schedule_has_no_drift() {
        let dt = 0.001;
        let ticks: Vec<usize> = tick_indices(1_000_000, 50).collect();
        assert_eq!(ticks.len(), 20_001);
        for (k, n) in ticks.iter().enumerate() {
            assert_eq!(*n, 50 * k);
        }
        let last = *ticks.last().unwrap() as f64 * dt;
        assert_eq!(last, 1000.0);
    }

    #[test]
    fn quiet_scenario_stays_quiet() {
        let cfg = short("duration = 2.0\n[rig]\npixel_noise_sigma = 0.0");
        let run = run_scenario(&cfg).unwrap();
        assert!(run.aborted.is_none());
        assert_eq!(run.trace.records.len(), 41);
        for (k, r) in run.trace.records.iter().enumerate() {
            assert!((r.t - k as f64 * 0.05).abs() < 1e-12);
            assert_eq!(r.phi_x, 0.0);
            assert!(r.phi_x_hat.abs() < 1e-9 && r.phi_y_hat.abs() < 1e-9);
            assert!(r.y1.abs() < 1e-9 && r.y2.abs() < 1e-9);
            assert!(r.v_x.abs() < 1e-9 && r.v_y.abs() < 1e-9);
            assert!(r.vision_valid);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let cfg = ScenarioConfig {
            duration: -1.0,
            ..ScenarioConfig::default()
        };
        assert!(run_scenario(&cfg).is_err());
    }
}
