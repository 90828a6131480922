use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed parameter JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DynamicsError {
    #[error("ZYX Euler singularity: |theta| = {theta} is within 1e-6 of pi/2")]
    EulerSingularity { theta: f64 },
    #[error("non-finite state encountered")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlatnessError {
    #[error("free-fall singularity at t = {t}: |a_U1| = {norm} <= 1e-6")]
    FreeFall { t: f64, norm: f64 },
    #[error("yaw-alignment singularity at t = {t}: body z-axis parallel to the yaw heading")]
    YawAlignment { t: f64 },
    #[error("near-zero thrust at t = {t}: U1 = {thrust} N")]
    LowThrust { t: f64, thrust: f64 },
    #[error("time {t} outside the trajectory domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },
    #[error("drag/attitude fixed point did not converge at t = {t}")]
    NoConvergence { t: f64 },
    #[error("non-finite flat sample at t = {t}")]
    NonFinite { t: f64 },
    #[error("at t = {t}: {source}")]
    Dynamics {
        t: f64,
        #[source]
        source: DynamicsError,
    },
}

impl FlatnessError {
    /// Time stamp the failure refers to.
    pub fn time(&self) -> f64 {
        match *self {
            FlatnessError::FreeFall { t, .. }
            | FlatnessError::YawAlignment { t }
            | FlatnessError::LowThrust { t, .. }
            | FlatnessError::Domain { t, .. }
            | FlatnessError::NoConvergence { t }
            | FlatnessError::NonFinite { t }
            | FlatnessError::Dynamics { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("keyframe times must satisfy 0 < t1 < t2 (got t1 = {t1}, t2 = {t2})")]
    BadTimes { t1: f64, t2: f64 },
    #[error("keyframe flag pattern does not match trajectory type {0}")]
    InconsistentFlags(String),
    #[error("constraint system is singular or ill-conditioned (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("null space has rank {found}, expected {expected}")]
    NullSpaceRank { expected: usize, found: usize },
    #[error("null-space normal equations are singular: {0}")]
    NormalEquationSingular(String),
    #[error("extra constraint at t = {t} is invalid: {reason}")]
    BadExtra { t: f64, reason: String },
    #[error("time {t} outside the trajectory domain [0, {end}]")]
    Domain { t: f64, end: f64 },
    #[error("output index {0} out of range (0..4)")]
    BadOutput(usize),
    #[error("trajectory implies free-fall thrust at t = {t} (U1 = {thrust} N)")]
    FreeFallThrust { t: f64, thrust: f64 },
    #[error("invalid hop request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Flatness(#[from] FlatnessError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HopError {
    #[error("stance map requires a contact state; foot clearance is {clearance} m")]
    NonContact { clearance: f64 },
    #[error("leg does not point into the surface at touchdown (z_B · n = {dot})")]
    LegAway { dot: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("trajectory generation failed for hop {hop}")]
    Generation {
        hop: usize,
        #[source]
        source: TrajectoryError,
    },
    #[error("singularity at t = {t} s during hop {hop}: {message}")]
    Singularity { hop: usize, t: f64, message: String },
    #[error("stance failure in hop {hop}")]
    Stance {
        hop: usize,
        #[source]
        source: HopError,
    },
    #[error("log is empty")]
    EmptyLog,
    #[error("malformed log CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
