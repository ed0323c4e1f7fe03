use crane_lab::cable::{estimator_step, filter_signals, EstimatorParams, LengthEstimatorState};
use crane_lab::ekf::{
    default_measurement_noise, default_process_noise, ekf_predict, ekf_update, innovation, min_eigenvalue,
    EkfState,
};
use crane_lab::kinematics::{forward_kinematics, tip_jacobian, CraneGeometry};
use crane_lab::pendulum::{pendulum_energy, step_pendulum, PayloadParams, PendulumState};
use nalgebra::{Matrix6, Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn joint_strategy() -> impl Strategy<Value = Vector3<f64>> {
    let geom = CraneGeometry::default();
    let (lo2, hi2) = geom.actuator_range(2);
    let (lo3, hi3) = geom.actuator_range(3);
    (-3.1f64..3.1, lo2..hi2, lo3..hi3).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn jacobian_matches_central_differences(q in joint_strategy()) {
        let geom = CraneGeometry::default();
        let jac = tip_jacobian(&q, &geom).unwrap();
        let h = 1e-6;
        let scale = jac.abs().max().max(1e-3);
        for c in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[c] += h;
            qm[c] -= h;
            let col = (forward_kinematics(&qp, &geom).unwrap() - forward_kinematics(&qm, &geom).unwrap()) / (2.0 * h);
            for r in 0..3 {
                prop_assert!((col[r] - jac[(r, c)]).abs() <= 1e-6 * scale,
                    "J[{r},{c}] = {} vs {}", jac[(r, c)], col[r]);
            }
        }
    }

    #[test]
    fn estimate_stays_in_bounds_and_gain_positive(
        signals in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -3.0f64..3.0), 1..400),
        initial in 0.3f64..1.5,
    ) {
        let params = EstimatorParams { initial_length: initial, ..EstimatorParams::default() };
        let mut st = LengthEstimatorState::new(&params, 9.81).unwrap();
        let (lo, hi) = st.eta_bounds();
        for (phi, rate, accel) in signals {
            let (z, psi) = filter_signals(phi, rate, accel, &mut st, 0.05);
            st = estimator_step(&st, z, psi, 0.05);
            prop_assert!(st.eta >= lo && st.eta <= hi, "eta = {}", st.eta);
            prop_assert!(st.gamma > 0.0);
            prop_assert!(st.filtered_length >= params.min_length - 1e-12);
            prop_assert!(st.filtered_length <= params.max_length + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn undriven_energy_is_conserved(phi_x in -0.6f64..0.6, phi_y in -0.6f64..0.6, rx in -0.5f64..0.5, ry in -0.5f64..0.5) {
        let payload = PayloadParams::default();
        let mut s = PendulumState::new(phi_x, phi_y, rx, ry);
        let e0 = pendulum_energy(&s, &payload);
        for _ in 0..60_000 {
            s = step_pendulum(&s, [0.0, 0.0], &payload, 0.001).unwrap();
        }
        let drift = (pendulum_energy(&s, &payload) - e0).abs() / e0.abs();
        prop_assert!(drift < 1e-6, "relative drift {drift}");
    }
}

fn integrate(s0: PendulumState, dt: f64, seconds: f64) -> PendulumState {
    let payload = PayloadParams::default();
    let steps = (seconds / dt).round() as usize;
    let mut s = s0;
    for _ in 0..steps {
        s = step_pendulum(&s, [0.0, 0.0], &payload, dt).unwrap();
    }
    s
}

#[test]
fn rk4_error_ratio_under_step_halving() {
    let s0 = PendulumState::new(0.5, 0.3, 0.2, -0.4);
    let reference = integrate(s0, 0.02 / 16.0, 2.0);
    let err = |dt: f64| {
        let s = integrate(s0, dt, 2.0);
        ((s.phi_x - reference.phi_x).powi(2)
            + (s.phi_y - reference.phi_y).powi(2)
            + (s.phidot_x - reference.phidot_x).powi(2)
            + (s.phidot_y - reference.phidot_y).powi(2))
        .sqrt()
    };
    let ratio = err(0.04) / err(0.02);
    assert!((ratio / 16.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
}

fn random_filter(rng: &mut ChaCha8Rng) -> EkfState {
    EkfState::new(
        Vector6::zeros(),
        Matrix6::zeros(),
        default_process_noise(),
        default_measurement_noise(),
        0.05,
    )
    .with_scheme(if rng.gen_bool(0.5) {
        crane_lab::ekf::Discretization::ForwardEuler
    } else {
        crane_lab::ekf::Discretization::SemiImplicitEuler
    })
}

#[test]
fn covariance_stays_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2 {
        let mut s = random_filter(&mut rng);
        for k in 0..10_000 {
            let a = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            s = ekf_predict(&s, a, 1.05, 9.81).unwrap();
            if k % 7 != 3 {
                let y = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
                s = ekf_update(&s, y).unwrap();
            }
            // keep the state inside the admissible cone
            s.z[0] = s.z[0].clamp(-1.0, 1.0);
            s.z[1] = s.z[1].clamp(-1.0, 1.0);
            let asym = (s.p - s.p.transpose()).abs().max();
            assert!(asym <= 1e-10, "asymmetry {asym} at step {k}");
            assert!(min_eigenvalue(&s.p) >= -1e-10, "negative eigenvalue at step {k}");
        }
    }
}

/// Exact pendulum sampled every 50 ms with additive measurement noise.
fn measured_run(seconds: f64, offset: [f64; 2], noise: f64, seed: u64) -> Vec<(PendulumState, [f64; 2])> {
    let payload = PayloadParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let mut s = PendulumState::new(0.2, -0.1, 0.0, 0.3);
    let mut out = Vec::new();
    for _ in 0..(seconds / 0.05).round() as usize {
        let mut y = [s.phi_x + offset[0], s.phi_y + offset[1]];
        if noise > 0.0 {
            y[0] += normal.sample(&mut rng);
            y[1] += normal.sample(&mut rng);
        }
        out.push((s, y));
        for _ in 0..50 {
            s = step_pendulum(&s, [0.0, 0.0], &payload, 0.001).unwrap();
        }
    }
    out
}

fn run_filter(samples: &[(PendulumState, [f64; 2])]) -> Vec<(EkfState, [f64; 2])> {
    let mut s = EkfState::new(
        Vector6::zeros(),
        Matrix6::zeros(),
        default_process_noise(),
        default_measurement_noise(),
        0.05,
    );
    let mut out = Vec::new();
    for (k, (_, y)) in samples.iter().enumerate() {
        if k > 0 {
            s = ekf_predict(&s, [0.0, 0.0], 1.05, 9.81).unwrap();
        }
        let nu = innovation(&s, *y);
        s = ekf_update(&s, *y).unwrap();
        out.push((s.clone(), [nu[0], nu[1]]));
    }
    out
}

#[test]
fn bias_state_picks_up_calibration_offset() {
    let offset = 1f64.to_radians();
    let samples = measured_run(20.0, [offset, 0.0], 0.002, 5);
    let filtered = run_filter(&samples);
    let n_x = filtered.last().unwrap().0.z[4];
    assert!((n_x / offset - 1.0).abs() < 0.2, "n_x = {} deg", n_x.to_degrees());
}

#[test]
fn noise_free_error_decreases_over_windows() {
    let samples = measured_run(30.0, [0.0, 0.0], 0.0, 1);
    let filtered = run_filter(&samples);
    let window = 40;
    let rms: Vec<f64> = filtered
        .chunks(window)
        .zip(samples.chunks(window))
        .map(|(f, s)| {
            let sum: f64 = f
                .iter()
                .zip(s)
                .map(|((e, _), (truth, _))| (e.z[0] - truth.phi_x).powi(2) + (e.z[1] - truth.phi_y).powi(2))
                .sum();
            (sum / f.len() as f64).sqrt()
        })
        .collect();
    for w in rms.windows(2) {
        assert!(w[1] <= w[0], "window RMS {rms:?}");
    }
}

#[test]
fn innovations_are_white_once_converged() {
    let samples = measured_run(60.0, [0.0, 0.0], 0.004, 9);
    let filtered = run_filter(&samples);
    let tail: Vec<f64> = filtered[filtered.len() - 600..].iter().map(|(_, nu)| nu[0]).collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let var: f64 = tail.iter().map(|v| (v - mean).powi(2)).sum();
    let lag1: f64 = tail.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let rho = lag1 / var;
    assert!(rho.abs() < 0.2, "lag-1 autocorrelation {rho}");
}

#[test]
fn three_cameras_beat_every_pair() {
    use crane_lab::kinematics::{nominal_configuration, JointState};
    use crane_lab::pendulum::SimState;
    use crane_lab::vision::{measure_angles, synthesize_observations, triangulate_markers, CameraRig};

    let geom = CraneGeometry::default();
    let rig = CameraRig::default();
    let sim = SimState {
        joints: JointState::at_rest(nominal_configuration(0.4, &geom)),
        pendulum: PendulumState::new(0.1, -0.05, 0.0, 0.0),
    };
    let cameras = rig.cameras(sim.joints.q[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // index 0: all cameras; 1..=3: camera k-1 dropped
    let mut sq = [0.0f64; 4];
    let trials = 2000;
    for _ in 0..trials {
        let obs = synthesize_observations(&sim, &rig, &geom, &mut rng).unwrap();
        for (slot, acc) in sq.iter_mut().enumerate() {
            let mut o = obs.clone();
            if slot > 0 {
                o.views[slot - 1] = None;
            }
            let tri = triangulate_markers(&o, &cameras).unwrap();
            let y = measure_angles(&tri[0].point, &tri[1].point).unwrap();
            *acc += (y[0] - 0.1).powi(2) + (y[1] + 0.05).powi(2);
        }
    }
    let var = sq.map(|s| s / trials as f64);
    for pair in &var[1..] {
        assert!(var[0] <= *pair, "variances {var:?}");
    }
}
