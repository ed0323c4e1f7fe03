use thiserror::Error;

/// Failures raised by the simulation, estimation and control routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("actuator {joint} extension {extension} m is geometrically impossible (arccos argument {argument})")]
    OutOfReach {
        joint: usize,
        extension: f64,
        argument: f64,
    },
    #[error("tip Jacobian is singular (condition number {condition:.3e})")]
    SingularConfiguration { condition: f64 },
    #[error("cable angle phi_y = {phi_y} rad is too close to the cone singularity")]
    ConeSingularity { phi_y: f64 },
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("marker seen by {valid} camera(s), at least 2 are needed")]
    InsufficientViews { valid: usize },
    #[error("triangulation nullspace is ambiguous")]
    DegenerateGeometry,
    #[error("marker estimates coincide")]
    CoincidentMarkers,
    #[error("innovation covariance is ill-conditioned (condition number {condition:.3e})")]
    IllConditionedInnovation { condition: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
