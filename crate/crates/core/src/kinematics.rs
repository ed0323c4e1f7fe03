//! Knuckle boom crane kinematics.
//!
//! The crane is an open chain: slew joint `q1` on the pedestal, and two
//! luffing joints driven by linear actuators with extensions `q2`, `q3`.
//! The actuator extensions are mapped to joint angles through the linkage
//! triangle, and the tip (frame 5) position follows from the rotation chain
//! `R01 = Rx(pi) Rz(-pi/2) Rz(q1)`, `R12 = Rx(pi/2) Rz(a2)`, `R23 = Rz(a3)`,
//! `R34 = Rz(theta4)`. The inertial z axis points down.

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default limit on the condition number of the tip Jacobian.
pub const DEFAULT_MAX_CONDITION: f64 = 1e6;

const ARCCOS_TOLERANCE: f64 = 1e-12;
const RANGE_MARGIN: f64 = 0.01;

/// Link lengths and actuator linkage offsets of the crane.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CraneGeometry {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub a_b2: f64,
    pub e_b2: f64,
    pub a_p2: f64,
    pub e_p2: f64,
    pub a_b3: f64,
    pub e_b3: f64,
    pub a_p3: f64,
    pub e_p3: f64,
    /// Fixed bend of the outer boom [rad].
    pub theta4: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for CraneGeometry {
    fn default() -> Self {
        Self {
            l1: 0.711,
            l2: 1.500,
            l3: 0.205,
            l4: 0.992,
            a_b2: 0.550,
            e_b2: 0.154,
            a_p2: 0.600,
            e_p2: 0.130,
            a_b3: 0.750,
            e_b3: 0.160,
            a_p3: 0.167,
            e_p3: 0.076,
            theta4: (-39.4f64).to_radians(),
            c2: 0.5 * PI,
            c3: PI,
        }
    }
}

/// Linkage triangle of one luffing actuator.
#[derive(Debug, Clone, Copy)]
struct Linkage {
    a_b: f64,
    e_b: f64,
    a_p: f64,
    e_p: f64,
    c: f64,
}

impl Linkage {
    fn b1(&self) -> f64 {
        self.a_b.hypot(self.e_b)
    }

    fn b2(&self) -> f64 {
        self.a_p.hypot(self.e_p)
    }
}

impl CraneGeometry {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("l4", self.l4),
            ("a_b2", self.a_b2),
            ("e_b2", self.e_b2),
            ("a_p2", self.a_p2),
            ("e_p2", self.e_p2),
            ("a_b3", self.a_b3),
            ("e_b3", self.e_b3),
            ("a_p3", self.a_p3),
            ("e_p3", self.e_p3),
        ];
        for (name, value) in lengths {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    fn linkage(&self, joint: usize) -> Linkage {
        match joint {
            2 => Linkage {
                a_b: self.a_b2,
                e_b: self.e_b2,
                a_p: self.a_p2,
                e_p: self.e_p2,
                c: self.c2,
            },
            3 => Linkage {
                a_b: self.a_b3,
                e_b: self.e_b3,
                a_p: self.a_p3,
                e_p: self.e_p3,
                c: self.c3,
            },
            _ => panic!("luffing joints are 2 and 3, got {joint}"),
        }
    }

    /// `(b_i1, b_i2)` of the linkage triangle of actuator `joint`.
    pub fn linkage_sides(&self, joint: usize) -> (f64, f64) {
        let link = self.linkage(joint);
        (link.b1(), link.b2())
    }

    /// Admissible extension interval of actuator `joint`, shrunk by a 1%
    /// margin of its width at both ends.
    pub fn actuator_range(&self, joint: usize) -> (f64, f64) {
        let (b1, b2) = self.linkage_sides(joint);
        let lo = (b1 - b2).abs();
        let hi = b1 + b2;
        let margin = RANGE_MARGIN * (hi - lo);
        (lo + margin, hi - margin)
    }
}

/// Generalized coordinates of the crane and their rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    /// `[q1, q2, q3]`: slew angle [rad] and actuator extensions [m].
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
}

impl JointState {
    pub fn at_rest(q: Vector3<f64>) -> Self {
        Self {
            q,
            qdot: Vector3::zeros(),
        }
    }
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation from frame 0 to frame 1 for slew angle `q1`.
pub fn king_rotation(q1: f64) -> Matrix3<f64> {
    // Rx(pi) Rz(-pi/2), written out so the slew axis is exactly vertical.
    let base = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
    base * rot_z(q1)
}

/// Joint angle `alpha_i(q_i)` and its derivative with respect to `q_i`.
pub fn joint_angle_alpha(extension: f64, joint: usize, geom: &CraneGeometry) -> Result<(f64, f64)> {
    let link = geom.linkage(joint);
    let (b1, b2) = (link.b1(), link.b2());
    let mut arg = (extension * extension - b1 * b1 - b2 * b2) / (-2.0 * b1 * b2);
    if !(arg.abs() <= 1.0 + ARCCOS_TOLERANCE) {
        return Err(Error::OutOfReach {
            joint,
            extension,
            argument: arg,
        });
    }
    arg = arg.clamp(-1.0, 1.0);
    let alpha = arg.acos() + (link.e_b / link.a_b).atan() + (link.e_p / link.a_p).atan() - link.c;
    // d(arccos x)/dq with dx/dq = -q / (b1 b2)
    let sine = (1.0 - arg * arg).sqrt();
    let dalpha = if sine > 0.0 {
        extension / (b1 * b2 * sine)
    } else {
        f64::INFINITY
    };
    Ok((alpha, dalpha))
}

/// Frame data of the kinematic chain at one configuration.
#[derive(Debug, Clone, Copy)]
pub struct ChainFrames {
    pub r01: Matrix3<f64>,
    pub r02: Matrix3<f64>,
    pub r03: Matrix3<f64>,
    /// Vectors from the origins of frames 1, 2, 3 to the tip, in frame 0.
    pub p15: Vector3<f64>,
    pub p25: Vector3<f64>,
    pub p35: Vector3<f64>,
    pub dalpha2: f64,
    pub dalpha3: f64,
}

impl ChainFrames {
    pub fn compute(q: &Vector3<f64>, geom: &CraneGeometry) -> Result<Self> {
        let (alpha2, dalpha2) = joint_angle_alpha(q[1], 2, geom)?;
        let (alpha3, dalpha3) = joint_angle_alpha(q[2], 3, geom)?;

        let r01 = king_rotation(q[0]);
        let r12 = rot_x(0.5 * PI) * rot_z(alpha2);
        let r23 = rot_z(alpha3);
        let r34 = rot_z(geom.theta4);

        let p12 = Vector3::new(0.0, 0.0, geom.l1);
        let p23 = Vector3::new(geom.l2, 0.0, 0.0);
        let p34 = Vector3::new(geom.l3, 0.0, 0.0);
        let p45 = Vector3::new(geom.l4, 0.0, 0.0);

        let r02 = r01 * r12;
        let r03 = r02 * r23;
        let p35_local = p34 + r34 * p45;
        let p25_local = p23 + r23 * p35_local;

        Ok(Self {
            r01,
            r02,
            r03,
            p15: r01 * (p12 + r12 * p25_local),
            p25: r02 * p25_local,
            p35: r03 * p35_local,
            dalpha2,
            dalpha3,
        })
    }

    pub fn tip(&self) -> Vector3<f64> {
        self.p15
    }

    pub fn jacobian(&self) -> Matrix3<f64> {
        let ez = Vector3::z();
        let c1 = (self.r01 * ez).cross(&self.p15);
        let c2 = (self.r02 * ez).cross(&self.p25) * self.dalpha2;
        let c3 = (self.r03 * ez).cross(&self.p35) * self.dalpha3;
        Matrix3::from_columns(&[c1, c2, c3])
    }
}

/// Crane tip position `p05` in the inertial frame.
pub fn forward_kinematics(q: &Vector3<f64>, geom: &CraneGeometry) -> Result<Vector3<f64>> {
    Ok(ChainFrames::compute(q, geom)?.tip())
}

/// Jacobian mapping `[q1dot, q2dot, q3dot]` to the tip linear velocity.
pub fn tip_jacobian(q: &Vector3<f64>, geom: &CraneGeometry) -> Result<Matrix3<f64>> {
    Ok(ChainFrames::compute(q, geom)?.jacobian())
}

pub fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Joint rate commands producing the planar tip velocity `v_xy` with zero
/// vertical tip velocity.
pub fn joint_rates_from_tip_velocity(
    v_xy: [f64; 2],
    q: &Vector3<f64>,
    geom: &CraneGeometry,
    max_condition: f64,
) -> Result<Vector3<f64>> {
    let jac = tip_jacobian(q, geom)?;
    solve_tip_velocity(&jac, Vector3::new(v_xy[0], v_xy[1], 0.0), max_condition)
}

pub(crate) fn solve_tip_velocity(
    jac: &Matrix3<f64>,
    v: Vector3<f64>,
    max_condition: f64,
) -> Result<Vector3<f64>> {
    let condition = condition_number(jac);
    if !(condition <= max_condition) {
        return Err(Error::SingularConfiguration { condition });
    }
    jac.lu()
        .solve(&v)
        .ok_or(Error::SingularConfiguration { condition })
}

/// Newton iteration for the joint coordinates that put the tip at `target`.
pub fn inverse_kinematics(
    target: &Vector3<f64>,
    initial: &Vector3<f64>,
    geom: &CraneGeometry,
) -> Result<Vector3<f64>> {
    let ranges = [geom.actuator_range(2), geom.actuator_range(3)];
    let mut q = *initial;
    for _ in 0..100 {
        let frames = ChainFrames::compute(&q, geom)?;
        let err = target - frames.tip();
        if err.norm() < 1e-12 {
            return Ok(q);
        }
        let step = solve_tip_velocity(&frames.jacobian(), err, DEFAULT_MAX_CONDITION)?;
        q += step;
        for (k, (lo, hi)) in ranges.iter().enumerate() {
            q[k + 1] = q[k + 1].clamp(*lo, *hi);
        }
    }
    let residual = (target - forward_kinematics(&q, geom)?).norm();
    if residual < 1e-9 {
        Ok(q)
    } else {
        Err(Error::InvalidParameter(format!(
            "tip target {target:?} is unreachable (residual {residual:.3e} m)"
        )))
    }
}

/// Horizontal reach and height above the pedestal of the nominal pose [m].
pub const NOMINAL_REACH: f64 = 1.8;
pub const NOMINAL_HEIGHT: f64 = 1.15;

/// Joint coordinates placing the tip at the nominal reach and height, with
/// the king turned to slew angle `q1`.
pub fn nominal_configuration(q1: f64, geom: &CraneGeometry) -> Vector3<f64> {
    let (lo2, hi2) = geom.actuator_range(2);
    let (lo3, hi3) = geom.actuator_range(3);
    let guess = Vector3::new(q1, lo2 + 0.85 * (hi2 - lo2), lo3 + 0.5 * (hi3 - lo3));
    // Tip in the king frame lies in its x-z plane.
    let local = Vector3::new(NOMINAL_REACH, 0.0, NOMINAL_HEIGHT);
    let target = king_rotation(q1) * local;
    inverse_kinematics(&target, &guess, geom).unwrap_or(guess)
}
