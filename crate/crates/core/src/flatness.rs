//! Differential-flatness map with nonlinear drag.
//!
//! Flat outputs are the centre-of-mass position and yaw. From a sample of
//! their derivatives this module recovers the attitude and collective
//! thrust, the drag-adjusted jerk, the body rates and (by central
//! differences) the body angular accelerations.
//!
//! The attitude and the translational drag depend on each other
//! (`D_T` is rotated by `R_BW`), so the thrust direction is found by a
//! warm-started fixed-point iteration. The drag-adjusted jerk in turn depends
//! on the body rates it is used to compute; [`JerkMode::Full`] iterates that
//! loop to self-consistency.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rotation_to_euler, sgn_vec, translational_drag, State12};
use crate::error::FlatnessError;
use crate::params::RobotParams;

/// Minimum norm of the thrust acceleration `a_U1`.
pub const EPS_THRUST_ACCEL: f64 = 1e-6;
/// Minimum `‖z_B × x_ψ‖` before the yaw heading becomes ill-defined.
pub const EPS_YAW_ALIGNMENT: f64 = 1e-6;
/// Relative thrust floor (`ε_U = 1e-4 · m g`) for the body-rate map.
pub const EPS_THRUST_REL: f64 = 1e-4;
/// Default step for the angular-acceleration finite difference (s).
pub const DEFAULT_FD_STEP: f64 = 1e-4;

const ATTITUDE_TOL: f64 = 1e-13;
const ATTITUDE_ACCEPT: f64 = 1e-9;
const OMEGA_TOL: f64 = 1e-13;
const MAX_FIXED_POINT_ITERS: usize = 60;

/// Flat outputs and their derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlatSample {
    pub t: f64,
    pub r: Vector3<f64>,
    pub r_dot: Vector3<f64>,
    pub r_ddot: Vector3<f64>,
    pub r_jerk: Vector3<f64>,
    pub r_snap: Vector3<f64>,
    pub psi: f64,
    pub psi_dot: f64,
    pub psi_ddot: f64,
}

impl FlatSample {
    /// A stationary sample at `r` with yaw `psi`.
    pub fn hover(t: f64, r: Vector3<f64>, psi: f64) -> Self {
        Self { t, r, psi, ..Default::default() }
    }

    pub fn is_finite(&self) -> bool {
        [self.r, self.r_dot, self.r_ddot, self.r_jerk, self.r_snap]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
            && [self.psi, self.psi_dot, self.psi_ddot].iter().all(|c| c.is_finite())
    }
}

/// Desired state, accelerations and feedforward thrust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatState {
    pub t: f64,
    /// Desired 12-state.
    pub x_d: State12,
    /// Desired translational acceleration `(ẍ, ÿ, z̈)` in the world frame.
    pub accel: Vector3<f64>,
    /// Desired body angular acceleration `(ṗ, q̇, ṙ)`.
    pub ang_accel: Vector3<f64>,
    /// Feedforward collective thrust (N).
    pub u1_d: f64,
    /// Attitude the Euler angles were extracted from.
    pub r_bw: Matrix3<f64>,
}

impl FlatState {
    /// `[ẍ, ÿ, z̈, ṗ, q̇, ṙ]`.
    pub fn x_dd(&self) -> [f64; 6] {
        [
            self.accel[0],
            self.accel[1],
            self.accel[2],
            self.ang_accel[0],
            self.ang_accel[1],
            self.ang_accel[2],
        ]
    }
}

/// How the drag derivative enters the jerk used for the body rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JerkMode {
    /// Full drag derivative with the body rates solved self-consistently.
    #[default]
    Full,
    /// Isotropic scalar `C_T`; the `Ṙ` term is dropped.
    Symmetric,
    /// Full drag derivative evaluated once with the previous step's rates.
    PreviousOmega,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessOptions {
    pub drag_comp: bool,
    pub jerk_mode: JerkMode,
    pub fd_step: f64,
}

impl Default for FlatnessOptions {
    fn default() -> Self {
        Self { drag_comp: true, jerk_mode: JerkMode::Full, fd_step: DEFAULT_FD_STEP }
    }
}

impl FlatnessOptions {
    pub fn with_drag_comp(drag_comp: bool) -> Self {
        Self { drag_comp, ..Self::default() }
    }
}

/// Attitude, thrust and body rates at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatKinematics {
    pub u1: f64,
    pub r_bw: Matrix3<f64>,
    pub omega: Vector3<f64>,
}

/// Something that yields flat samples over a closed time interval.
pub trait FlatSource {
    fn domain(&self) -> (f64, f64);
    fn flat_sample(&self, t: f64) -> Result<FlatSample, FlatnessError>;
}

/// Body frame from a thrust axis and a yaw heading:
/// `y_B = z_B × x_ψ / ‖·‖`, `x_B = y_B × z_B`.
pub fn attitude_from_thrust_axis(z_b: &Vector3<f64>, psi: f64, t: f64) -> Result<Matrix3<f64>, FlatnessError> {
    let x_psi = Vector3::new(psi.cos(), psi.sin(), 0.0);
    let cross = z_b.cross(&x_psi);
    let n = cross.norm();
    if n <= EPS_YAW_ALIGNMENT {
        return Err(FlatnessError::YawAlignment { t });
    }
    let y_b = cross / n;
    let x_b = y_b.cross(z_b);
    Ok(Matrix3::from_columns(&[x_b, y_b, *z_b]))
}

/// Heading that [`attitude_from_thrust_axis`] maps back onto `r` given its
/// own thrust axis. It differs from the ZYX yaw once roll and pitch are both
/// nonzero.
pub fn heading_of(r: &Matrix3<f64>) -> f64 {
    let (x, z) = (r.column(0), r.column(2));
    // horizontal vector in span(x_B, z_B) on the x_B side
    let mut h = x * z[2] - z * x[2];
    if z[2] < 0.0 {
        h = -h;
    }
    if h[0].hypot(h[1]) <= EPS_YAW_ALIGNMENT {
        return rotation_to_euler(r)[2];
    }
    h[1].atan2(h[0])
}

fn thrust_accel(params: &RobotParams, s: &FlatSample, r_bw: Option<&Matrix3<f64>>) -> Vector3<f64> {
    let mut a = s.r_ddot + Vector3::new(0.0, 0.0, params.g);
    if let Some(r) = r_bw {
        a += translational_drag(params, r, &s.r_dot) / params.mass;
    }
    a
}

fn attitude_for_accel(a: &Vector3<f64>, psi: f64, t: f64) -> Result<Matrix3<f64>, FlatnessError> {
    let norm = a.norm();
    if norm <= EPS_THRUST_ACCEL {
        return Err(FlatnessError::FreeFall { t, norm });
    }
    attitude_from_thrust_axis(&(a / norm), psi, t)
}

/// Collective thrust and attitude from the acceleration of a flat sample.
///
/// With `drag_comp` the attitude/drag coupling is resolved by fixed-point
/// iteration started from `r_prev` (or the drag-free attitude).
pub fn thrust_attitude(
    params: &RobotParams,
    sample: &FlatSample,
    r_prev: Option<&Matrix3<f64>>,
    drag_comp: bool,
) -> Result<(f64, Matrix3<f64>), FlatnessError> {
    let t = sample.t;
    if !drag_comp {
        let a = thrust_accel(params, sample, None);
        let r = attitude_for_accel(&a, sample.psi, t)?;
        return Ok((params.mass * a.norm(), r));
    }
    let mut r = match r_prev {
        Some(r) => *r,
        None => attitude_for_accel(&thrust_accel(params, sample, None), sample.psi, t)?,
    };
    let mut change = f64::INFINITY;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let a = thrust_accel(params, sample, Some(&r));
        let next = attitude_for_accel(&a, sample.psi, t)?;
        change = (next - r).abs().max();
        r = next;
        if change < ATTITUDE_TOL {
            break;
        }
    }
    if change > ATTITUDE_ACCEPT {
        return Err(FlatnessError::NoConvergence { t });
    }
    let a = thrust_accel(params, sample, Some(&r));
    Ok((params.mass * a.norm(), r))
}

/// Jerk corrected by the time derivative of the translational drag
/// (the Dirac term at velocity zero-crossings is dropped).
///
/// `Full`/`PreviousOmega`: `r⃛ + sign(ṙ) ∘ ((R ω̂ C_T) ṙ² + (R C_T)(2 ṙ ∘ r̈)) / m`.
/// `Symmetric`: `r⃛ + sign(ṙ) ∘ (2 c ṙ ∘ r̈) / m` with `c` the isotropic coefficient.
pub fn drag_adjusted_jerk(
    params: &RobotParams,
    sample: &FlatSample,
    r_bw: &Matrix3<f64>,
    omega_est: &Vector3<f64>,
    mode: JerkMode,
) -> Vector3<f64> {
    let v = &sample.r_dot;
    let sign = sgn_vec(v);
    let v_dot_a2 = 2.0 * v.component_mul(&sample.r_ddot);
    let extra = match mode {
        JerkMode::Symmetric => params.c_t_scalar() * v_dot_a2,
        JerkMode::Full | JerkMode::PreviousOmega => {
            let c = params.c_t();
            let r_dot = r_bw * omega_est.cross_matrix();
            r_dot * c * v.component_mul(v) + r_bw * c * v_dot_a2
        }
    };
    sample.r_jerk + sign.component_mul(&extra) / params.mass
}

/// Body rates from the drag-adjusted jerk.
///
/// `h_ω = m/U1 (r⃛* − (z_B·r⃛*) z_B)`, `p = −h_ω·y_B`, `q = h_ω·x_B`. The yaw
/// rate is the one that keeps `y_B ⊥ x_ψ`, i.e. the rate of the frame built
/// by [`attitude_from_thrust_axis`]; it equals `ψ̇ z_W·z_B` whenever the tilt
/// lies in the heading plane.
pub fn angular_velocity(
    params: &RobotParams,
    sample: &FlatSample,
    u1: f64,
    r_bw: &Matrix3<f64>,
    r_jerk_star: &Vector3<f64>,
) -> Result<Vector3<f64>, FlatnessError> {
    let floor = EPS_THRUST_REL * params.weight();
    if u1 <= floor {
        return Err(FlatnessError::LowThrust { t: sample.t, thrust: u1 });
    }
    let x_b = r_bw.column(0);
    let y_b = r_bw.column(1);
    let z_b = r_bw.column(2);
    let h = (params.mass / u1) * (r_jerk_star - z_b.dot(r_jerk_star) * z_b);
    let p = -h.dot(&y_b);
    let q = h.dot(&x_b);
    let (s, c) = sample.psi.sin_cos();
    let x_psi = Vector3::new(c, s, 0.0);
    let y_psi = Vector3::new(-s, c, 0.0);
    let r = (p * z_b.dot(&x_psi) + sample.psi_dot * y_b.dot(&y_psi)) / x_b.dot(&x_psi);
    Ok(Vector3::new(p, q, r))
}

/// Thrust, attitude and body rates for one sample.
pub fn flat_kinematics(
    params: &RobotParams,
    sample: &FlatSample,
    warm: Option<&FlatKinematics>,
    opts: &FlatnessOptions,
) -> Result<FlatKinematics, FlatnessError> {
    if !sample.is_finite() {
        return Err(FlatnessError::NonFinite { t: sample.t });
    }
    let (u1, r_bw) = thrust_attitude(params, sample, warm.map(|w| &w.r_bw), opts.drag_comp)?;
    if !opts.drag_comp {
        let omega = angular_velocity(params, sample, u1, &r_bw, &sample.r_jerk)?;
        return Ok(FlatKinematics { u1, r_bw, omega });
    }
    let mut omega = warm.map(|w| w.omega).unwrap_or_else(Vector3::zeros);
    match opts.jerk_mode {
        JerkMode::Symmetric | JerkMode::PreviousOmega => {
            let jerk = drag_adjusted_jerk(params, sample, &r_bw, &omega, opts.jerk_mode);
            omega = angular_velocity(params, sample, u1, &r_bw, &jerk)?;
        }
        JerkMode::Full => {
            let mut converged = false;
            for _ in 0..MAX_FIXED_POINT_ITERS {
                let jerk = drag_adjusted_jerk(params, sample, &r_bw, &omega, JerkMode::Full);
                let next = angular_velocity(params, sample, u1, &r_bw, &jerk)?;
                let change = (next - omega).abs().max();
                omega = next;
                if change <= OMEGA_TOL * (1.0 + omega.abs().max()) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(FlatnessError::NoConvergence { t: sample.t });
            }
        }
    }
    Ok(FlatKinematics { u1, r_bw, omega })
}

/// Body angular acceleration by finite differences of the body-rate map.
///
/// Central differences `(ω(t+h) − ω(t−h)) / 2h` inside the domain; within `h`
/// of an end the second-order one-sided stencil is used instead.
pub fn angular_acceleration<S: FlatSource + ?Sized>(
    params: &RobotParams,
    source: &S,
    t: f64,
    h: f64,
    center: Option<&FlatKinematics>,
    opts: &FlatnessOptions,
) -> Result<Vector3<f64>, FlatnessError> {
    let (start, end) = source.domain();
    let slack = 1e-12 * (1.0 + end.abs());
    if t < start - slack || t > end + slack {
        return Err(FlatnessError::Domain { t, start, end });
    }
    let omega_at = |tau: f64| -> Result<Vector3<f64>, FlatnessError> {
        let s = source.flat_sample(tau)?;
        Ok(flat_kinematics(params, &s, center, opts)?.omega)
    };
    if t - h >= start - slack && t + h <= end + slack {
        return Ok((omega_at(t + h)? - omega_at(t - h)?) / (2.0 * h));
    }
    let w0 = match center {
        Some(c) => c.omega,
        None => omega_at(t)?,
    };
    if t + 2.0 * h <= end + slack {
        Ok((-3.0 * w0 + 4.0 * omega_at(t + h)? - omega_at(t + 2.0 * h)?) / (2.0 * h))
    } else if t - 2.0 * h >= start - slack {
        Ok((3.0 * w0 - 4.0 * omega_at(t - h)? + omega_at(t - 2.0 * h)?) / (2.0 * h))
    } else {
        Err(FlatnessError::Domain { t: t + h, start, end })
    }
}

/// Full desired state at time `t` of a flat trajectory.
///
/// `prev` (the caller's previous result) warm-starts the attitude and
/// body-rate iterations.
pub fn flat_to_state<S: FlatSource + ?Sized>(
    params: &RobotParams,
    source: &S,
    t: f64,
    prev: Option<&FlatState>,
    opts: &FlatnessOptions,
) -> Result<FlatState, FlatnessError> {
    let sample = source.flat_sample(t)?;
    let warm = prev.map(|p| FlatKinematics { u1: p.u1_d, r_bw: p.r_bw, omega: p.x_d.rates });
    let kin = flat_kinematics(params, &sample, warm.as_ref(), opts)?;
    let ang_accel = angular_acceleration(params, source, t, opts.fd_step, Some(&kin), opts)?;
    let euler = rotation_to_euler(&kin.r_bw);
    Ok(FlatState {
        t,
        x_d: State12::new(sample.r, sample.r_dot, euler, kin.omega),
        accel: sample.r_ddot,
        ang_accel,
        u1_d: kin.u1,
        r_bw: kin.r_bw,
    })
}
