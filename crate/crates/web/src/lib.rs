//! Browser demo bindings. The computations live in [`demo`] so they can be
//! tested natively; the exported functions only convert errors.

pub mod demo;

use wasm_bindgen::prelude::*;

/// Damped swing: rows of [`demo::DAMPING_STRIDE`] values
/// `t, phi_x, phi_y, design envelope` (angles in degrees).
#[wasm_bindgen]
pub fn damping_trace(zeta: f64, initial_angle_deg: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    demo::damping_trace(zeta, initial_angle_deg, u64::from(seed)).map_err(|e| JsError::new(&e.to_string()))
}

/// Cable length identification: rows of [`demo::LENGTH_STRIDE`] values
/// `t, filtered length, raw length, true length`.
#[wasm_bindgen]
pub fn length_trace(initial_angle_deg: f64, initial_length: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    demo::length_trace(initial_angle_deg, initial_length, u64::from(seed)).map_err(|e| JsError::new(&e.to_string()))
}

/// Marker pixels `[u, v]` for markers 1 and 2 in cameras 1 to 3, NaN
/// where a marker is out of view.
#[wasm_bindgen]
pub fn camera_view(slew: f64, phi_x_deg: f64, phi_y_deg: f64) -> Result<Vec<f64>, JsError> {
    demo::camera_view(slew, phi_x_deg, phi_y_deg).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn damping_stride() -> usize {
    demo::DAMPING_STRIDE
}

#[wasm_bindgen]
pub fn length_stride() -> usize {
    demo::LENGTH_STRIDE
}

#[wasm_bindgen]
pub fn image_size() -> Vec<u32> {
    let k = crane_lab::vision::Intrinsics::default();
    vec![k.width, k.height]
}
