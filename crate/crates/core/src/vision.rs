//! Synthetic three-camera marker tracking and linear triangulation.
//!
//! Three pinhole cameras are mounted side by side on the crane king and
//! rotate with the slew. Two markers sit on the cable at fixed distances
//! below the tip. Their pixel centroids are synthesized from the ground
//! truth, then triangulated back by the SVD nullspace of the stacked
//! projection constraints, and the cable angles are read off the direction
//! between the two reconstructed markers.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::kinematics::{king_rotation, rot_x, rot_y, CraneGeometry};
use crate::pendulum::{cable_direction, SimState};

pub const NUM_CAMERAS: usize = 3;

const DEGENERACY_TOLERANCE: f64 = 1e-9;
const MIN_MARKER_SEPARATION: f64 = 1e-9;

pub type Pixel = [f64; 2];

/// A pinhole camera: `x ~ K [R | t] X`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Matrix3<f64>,
    /// Rotation from the inertial frame to the camera frame.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub resolution: (u32, u32),
}

/// Outcome of projecting one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Pixel,
    pub in_frame: bool,
}

impl CameraModel {
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics * rt
    }

    pub fn contains(&self, pixel: &Pixel) -> bool {
        let (w, h) = self.resolution;
        pixel[0] >= 0.0 && pixel[0] < w as f64 && pixel[1] >= 0.0 && pixel[1] < h as f64
    }
}

/// Projects `point` (relative to the camera-1 origin, inertial axes).
pub fn project_marker(point: &Vector3<f64>, cam: &CameraModel) -> Result<Projection> {
    let xh = cam.projection_matrix() * point.push(1.0);
    let depth = xh[2];
    if !(depth > 0.0) {
        return Err(Error::BehindCamera { depth });
    }
    let pixel = [xh[0] / depth, xh[1] / depth];
    Ok(Projection {
        pixel,
        in_frame: cam.contains(&pixel),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 1000.0,
            fy: 1000.0,
            cx: 640.0,
            cy: 360.0,
            width: 1280,
            height: 720,
        }
    }
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Camera rack on the crane king plus the cable markers it tracks.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraRig {
    pub intrinsics: Intrinsics,
    /// Spacing between cameras 1-2 and 2-3 [m].
    pub delta12: f64,
    pub delta23: f64,
    /// Camera 1 origin in king (frame 1) coordinates [m]. Defaults to
    /// `[0.3, 0, l1]` when left unset.
    pub camera1_mount: Option<[f64; 3]>,
    /// Distances of markers 1 and 2 along the cable from the tip [m].
    pub marker_offsets: [f64; 2],
    pub pixel_noise_sigma: f64,
    pub quantize: bool,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            intrinsics: Intrinsics::default(),
            delta12: 0.24,
            delta23: 0.24,
            camera1_mount: None,
            marker_offsets: [0.2, 0.8],
            pixel_noise_sigma: 0.5,
            quantize: false,
        }
    }
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        let [d1, d2] = self.marker_offsets;
        if !(d1 > 0.0 && d2 > d1) {
            return Err(Error::InvalidParameter(format!(
                "marker offsets must satisfy 0 < d1 < d2, got {d1}, {d2}"
            )));
        }
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || k.width == 0 || k.height == 0 {
            return Err(Error::InvalidParameter("camera intrinsics must be positive".into()));
        }
        if !(self.delta12 > 0.0 && self.delta23 > 0.0) {
            return Err(Error::InvalidParameter("camera spacings must be positive".into()));
        }
        if !(self.pixel_noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("pixel noise must be non-negative".into()));
        }
        Ok(())
    }

    fn mount(&self, geom: &CraneGeometry) -> Vector3<f64> {
        let m = self.camera1_mount.unwrap_or([0.3, 0.0, geom.l1]);
        Vector3::new(m[0], m[1], m[2])
    }

    /// Position of the camera-1 origin in the inertial frame.
    pub fn camera1_position(&self, q1: f64, geom: &CraneGeometry) -> Vector3<f64> {
        king_rotation(q1) * self.mount(geom)
    }

    /// The three cameras at slew angle `q1`. All cameras share the
    /// orientation `R0c = R01 Rx(pi/2)^T Ry(pi/2)` and are offset along
    /// their own x axis from camera 1.
    pub fn cameras(&self, q1: f64) -> [CameraModel; NUM_CAMERAS] {
        let r0c = king_rotation(q1) * rot_x(FRAC_PI_2).transpose() * rot_y(FRAC_PI_2);
        let rotation = r0c.transpose();
        let offsets = [0.0, self.delta12, self.delta12 + self.delta23];
        let k = self.intrinsics.matrix();
        let resolution = (self.intrinsics.width, self.intrinsics.height);
        offsets.map(|d| CameraModel {
            intrinsics: k,
            rotation,
            translation: Vector3::new(-d, 0.0, 0.0),
            resolution,
        })
    }
}

/// Marker centres relative to the camera-1 origin, in inertial axes.
pub fn marker_world_positions(
    sim: &SimState,
    rig: &CameraRig,
    geom: &CraneGeometry,
) -> Result<[Vector3<f64>; 2]> {
    let q = &sim.joints.q;
    let tip = crate::kinematics::forward_kinematics(q, geom)?;
    let from_camera = tip - rig.camera1_position(q[0], geom);
    let dir = cable_direction(sim.pendulum.phi_x, sim.pendulum.phi_y);
    Ok(rig.marker_offsets.map(|d| from_camera + dir * d))
}

/// Both marker centroids as seen by every camera. `None` marks a camera
/// that lost at least one marker.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelObservation {
    pub views: [Option<[Pixel; 2]>; NUM_CAMERAS],
}

impl PixelObservation {
    pub fn valid_cameras(&self) -> usize {
        self.views.iter().filter(|v| v.is_some()).count()
    }
}

/// Projects both markers through all cameras with optional Gaussian pixel
/// noise and rounding. Within each camera the markers are ordered so that
/// marker 2 has the larger row coordinate.
pub fn synthesize_observations<R: Rng + ?Sized>(
    sim: &SimState,
    rig: &CameraRig,
    geom: &CraneGeometry,
    rng: &mut R,
) -> Result<PixelObservation> {
    let markers = marker_world_positions(sim, rig, geom)?;
    let cameras = rig.cameras(sim.joints.q[0]);
    let noise = if rig.pixel_noise_sigma > 0.0 {
        Some(Normal::new(0.0, rig.pixel_noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let mut views = [None; NUM_CAMERAS];
    for (view, cam) in views.iter_mut().zip(cameras.iter()) {
        let mut pixels = [[0.0; 2]; 2];
        let mut valid = true;
        for (pixel, marker) in pixels.iter_mut().zip(markers.iter()) {
            match project_marker(marker, cam) {
                Ok(p) => {
                    let mut px = p.pixel;
                    if let Some(n) = &noise {
                        px[0] += n.sample(rng);
                        px[1] += n.sample(rng);
                    }
                    if rig.quantize {
                        px = px.map(f64::round);
                    }
                    valid &= cam.contains(&px);
                    *pixel = px;
                }
                Err(Error::BehindCamera { .. }) => valid = false,
                Err(e) => return Err(e),
            }
        }
        if valid {
            if pixels[1][1] < pixels[0][1] {
                pixels.swap(0, 1);
            }
            *view = Some(pixels);
        }
    }
    Ok(PixelObservation { views })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: Vector3<f64>,
    /// Smallest singular value of the stacked constraint matrix.
    pub sigma4: f64,
}

/// Stacked constraint matrix, two rows `[v P3 - P2; P1 - u P3]` per view.
pub fn constraint_matrix(views: &[(Matrix3x4<f64>, Pixel)]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(2 * views.len(), 4);
    for (k, (p, [u, v])) in views.iter().enumerate() {
        let r1 = p.row(0);
        let r2 = p.row(1);
        let r3 = p.row(2);
        a.row_mut(2 * k).copy_from(&(r3 * *v - r2));
        a.row_mut(2 * k + 1).copy_from(&(r1 - r3 * *u));
    }
    a
}

/// Linear (DLT) triangulation of one point from two or more views.
pub fn triangulate_point(views: &[(Matrix3x4<f64>, Pixel)]) -> Result<Triangulation> {
    if views.len() < 2 {
        return Err(Error::InsufficientViews { valid: views.len() });
    }
    let a = constraint_matrix(views);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = |k: usize| svd.singular_values[order[k]];
    let smallest = order[3];
    if sv(2) - sv(3) <= DEGENERACY_TOLERANCE * sv(0) {
        return Err(Error::DegenerateGeometry);
    }
    let nu: Vector4<f64> = v_t.row(smallest).transpose().fixed_rows::<4>(0).into_owned();
    if nu[3].abs() <= f64::EPSILON * nu.norm() {
        return Err(Error::DegenerateGeometry);
    }
    Ok(Triangulation {
        point: Vector3::new(nu[0], nu[1], nu[2]) / nu[3],
        sigma4: sv(3),
    })
}

/// Triangulates both markers from the valid cameras of `obs`.
pub fn triangulate_markers(
    obs: &PixelObservation,
    cameras: &[CameraModel; NUM_CAMERAS],
) -> Result<[Triangulation; 2]> {
    let mut per_marker: [Vec<(Matrix3x4<f64>, Pixel)>; 2] = [Vec::new(), Vec::new()];
    for (view, cam) in obs.views.iter().zip(cameras.iter()) {
        if let Some(pixels) = view {
            let p = cam.projection_matrix();
            per_marker[0].push((p, pixels[0]));
            per_marker[1].push((p, pixels[1]));
        }
    }
    Ok([
        triangulate_point(&per_marker[0])?,
        triangulate_point(&per_marker[1])?,
    ])
}

/// Cable angles `(phi_x, phi_y)` from the two reconstructed markers.
pub fn measure_angles(x1: &Vector3<f64>, x2: &Vector3<f64>) -> Result<[f64; 2]> {
    let d = x2 - x1;
    let n = d.norm();
    if !(n > MIN_MARKER_SEPARATION) {
        return Err(Error::CoincidentMarkers);
    }
    let r = d / n;
    let y1 = (-r.y / r.z).atan();
    let y2 = (r.x / (r.y * r.y + r.z * r.z).sqrt()).atan();
    Ok([y1, y2])
}

/// Angle measurement produced by one vision frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionMeasurement {
    pub angles: [f64; 2],
    pub sigma4: [f64; 2],
}

/// Full frame: synthesize pixels, triangulate, measure. Errors such as
/// `InsufficientViews` mean the frame produced no measurement.
pub fn measure_frame<R: Rng + ?Sized>(
    sim: &SimState,
    rig: &CameraRig,
    geom: &CraneGeometry,
    rng: &mut R,
) -> Result<VisionMeasurement> {
    let obs = synthesize_observations(sim, rig, geom, rng)?;
    let tri = triangulate_markers(&obs, &rig.cameras(sim.joints.q[0]))?;
    let angles = measure_angles(&tri[0].point, &tri[1].point)?;
    Ok(VisionMeasurement {
        angles,
        sigma4: [tri[0].sigma4, tri[1].sigma4],
    })
}
