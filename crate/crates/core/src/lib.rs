//! Simulation laboratory for vision-based anti-sway control of a knuckle
//! boom crane with online cable length estimation.

pub mod error;
pub mod kinematics;
pub mod pendulum;
pub mod vision;
pub mod ekf;
pub mod cable;
pub mod control;
pub mod scenario;

pub use error::{Error, Result};
