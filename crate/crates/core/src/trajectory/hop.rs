//! Liftoff-to-touchdown keyframes for one hop.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{generate, ExtraConstraint, Keyframe, PolynomialTrajectory, SystemCache, TrajectoryType, PSI, X, Y, Z};
use crate::dynamics::{euler_rates, euler_to_rotation, translational_drag, State12};
use crate::error::TrajectoryError;
use crate::flatness::{attitude_from_thrust_axis, heading_of, thrust_attitude, EPS_THRUST_REL};
use crate::params::RobotParams;

/// Liftoff thrust as a fraction of weight.
pub const DEFAULT_LO_THRUST_FACTOR: f64 = 0.9;
/// Touchdown thrust as a fraction of weight.
pub const DEFAULT_TD_THRUST_FACTOR: f64 = 0.2;
pub const DEFAULT_N_STAR: usize = 2;
/// Samples used to reject trajectories that demand (near) zero thrust.
pub const FREE_FALL_SAMPLES: usize = 100;

/// Desired touchdown state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchdownSpec {
    /// World position; entries the trajectory type leaves free are ignored.
    pub position: [Option<f64>; 3],
    /// ZYX Euler angles `(φ, θ, ψ)` whose body z-axis is the touchdown
    /// thrust direction; `ψ` is the touchdown yaw.
    pub euler: Vector3<f64>,
    /// Speed along `−z_Bd` at touchdown (m/s).
    pub v_td: f64,
    /// Touchdown thrust (N); defaults to `0.2 m g`.
    pub u1_td: Option<f64>,
}

impl TouchdownSpec {
    pub fn thrust_axis(&self) -> Result<Vector3<f64>, TrajectoryError> {
        Ok(euler_to_rotation(&self.euler)?.column(2).into_owned())
    }
}

/// Everything needed to generate one hop trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRequest {
    pub lo_state: State12,
    /// Liftoff thrust (N); defaults to `0.9 m g`.
    pub lo_u1: Option<f64>,
    pub ty: TrajectoryType,
    pub td: TouchdownSpec,
    /// Liftoff-to-touchdown time (s).
    pub t_m: f64,
    /// Reorientation lead time before touchdown (s).
    pub delta_t: f64,
    pub drag_comp: bool,
    /// Also subtract drag from the liftoff acceleration, so that with drag
    /// compensation the desired thrust axis starts on the liftoff body axis.
    /// Off by default: only the touchdown acceleration carries drag.
    #[serde(default)]
    pub lo_drag: bool,
    pub n_star: usize,
    pub extras: Vec<ExtraConstraint>,
}

impl HopRequest {
    pub fn new(lo_state: State12, ty: TrajectoryType, td: TouchdownSpec, t_m: f64, delta_t: f64) -> Self {
        Self {
            lo_state,
            lo_u1: None,
            ty,
            td,
            t_m,
            delta_t,
            drag_comp: true,
            lo_drag: false,
            n_star: DEFAULT_N_STAR,
            extras: Vec::new(),
        }
    }
}

/// Touchdown frame: thrust axis from the Euler triple, heading from its yaw.
pub fn td_rotation(td: &TouchdownSpec) -> Result<Matrix3<f64>, TrajectoryError> {
    Ok(attitude_from_thrust_axis(&td.thrust_axis()?, td.euler[2], 0.0)?)
}

/// `target + 2πk` closest to `reference`.
fn unwrap_near(target: f64, reference: f64) -> f64 {
    target + TAU * ((reference - target + PI) / TAU).floor()
}

/// Liftoff, reorientation and touchdown keyframes of a hop.
pub fn hop_keyframes(params: &RobotParams, req: &HopRequest) -> Result<[Keyframe; 3], TrajectoryError> {
    let invalid = |m: String| Err(TrajectoryError::InvalidRequest(m));
    if !(req.t_m > 0.0 && req.t_m.is_finite()) {
        return invalid(format!("t_m must be > 0, got {}", req.t_m));
    }
    if !(req.delta_t > 0.0 && req.delta_t < req.t_m) {
        return invalid(format!("delta_t must lie in (0, t_m), got {}", req.delta_t));
    }
    if !(req.td.v_td > 0.0 && req.td.v_td.is_finite()) {
        return invalid(format!("v_td must be > 0, got {}", req.td.v_td));
    }
    if !req.lo_state.is_finite() || !req.td.euler.iter().all(|a| a.is_finite()) {
        return invalid("non-finite liftoff state or touchdown attitude".into());
    }
    let weight = params.weight();
    let u1_lo = req.lo_u1.unwrap_or(DEFAULT_LO_THRUST_FACTOR * weight);
    let u1_td = req.td.u1_td.unwrap_or(DEFAULT_TD_THRUST_FACTOR * weight);
    if !(u1_lo >= 0.0 && u1_td >= 0.0) {
        return invalid("thrust values must be >= 0".into());
    }
    let g_w = Vector3::new(0.0, 0.0, params.g);

    let lo = &req.lo_state;
    let z_lo = lo.rotation()?.column(2).into_owned();
    let psi_lo = heading_of(&lo.rotation()?);
    let psi_dot_lo = euler_rates(&lo.euler, &lo.rates)?[2];
    let mut acc_lo = u1_lo / params.mass * z_lo - g_w;
    if req.drag_comp && req.lo_drag {
        acc_lo -= translational_drag(params, &lo.rotation()?, &lo.velocity) / params.mass;
    }
    let mut a0 = Keyframe::free(0.0);
    a0.set_vec(0, &lo.position)
        .set_vec(1, &lo.velocity)
        .set_vec(2, &acc_lo)
        .set_vec(3, &Vector3::zeros())
        .set(PSI, 0, psi_lo)
        .set(PSI, 1, psi_dot_lo);

    let r_td = td_rotation(&req.td)?;
    let z_td = r_td.column(2).into_owned();
    let v_td = -req.td.v_td * z_td;
    let mut acc_td = u1_td / params.mass * z_td - g_w;
    if req.drag_comp {
        acc_td -= translational_drag(params, &r_td, &v_td) / params.mass;
    }
    let mut a2 = Keyframe::free(req.t_m);
    for (j, desired) in [X, Y, Z].into_iter().map(|j| (j, req.ty.desired_pattern(super::KeyframeRole::TouchDown, j)[0])) {
        if desired {
            match req.td.position[j] {
                Some(p) if p.is_finite() => {
                    a2.set(j, 0, p);
                }
                _ => return invalid(format!("{} touchdown requires a {} position", req.ty, super::OUTPUT_NAMES[j])),
            }
        }
    }
    a2.set_vec(1, &v_td)
        .set_vec(2, &acc_td)
        .set_vec(3, &Vector3::zeros())
        .set(PSI, 0, unwrap_near(req.td.euler[2], psi_lo))
        .set(PSI, 1, 0.0);

    let mut a1 = Keyframe::free(req.t_m - req.delta_t);
    a1.set_vec(2, &acc_td);
    Ok([a0, a1, a2])
}

/// Generates a hop trajectory without caching.
pub fn make_hop_trajectory(params: &RobotParams, req: &HopRequest) -> Result<PolynomialTrajectory, TrajectoryError> {
    make_hop_trajectory_cached(params, req, None)
}

/// Generates a hop trajectory, reusing factorizations from `cache`.
///
/// The result is sampled at [`FREE_FALL_SAMPLES`] points and rejected if the
/// implied collective thrust drops below `1e-4 m g` anywhere.
pub fn make_hop_trajectory_cached(
    params: &RobotParams,
    req: &HopRequest,
    cache: Option<&SystemCache>,
) -> Result<PolynomialTrajectory, TrajectoryError> {
    let keyframes = hop_keyframes(params, req)?;
    let traj = generate(req.ty, keyframes, req.n_star, &req.extras, req.drag_comp, cache)?;
    check_thrust(params, &traj)?;
    Ok(traj)
}

fn check_thrust(params: &RobotParams, traj: &PolynomialTrajectory) -> Result<(), TrajectoryError> {
    let floor = EPS_THRUST_REL * params.weight();
    let mut prev: Option<Matrix3<f64>> = None;
    for i in 0..FREE_FALL_SAMPLES {
        let t = traj.t2 * i as f64 / (FREE_FALL_SAMPLES - 1) as f64;
        let s = traj.sample_unchecked(t);
        let (u1, r) = thrust_attitude(params, &s, prev.as_ref(), traj.drag_comp)
            .map_err(|_| TrajectoryError::FreeFallThrust { t, thrust: 0.0 })?;
        if u1 < floor {
            return Err(TrajectoryError::FreeFallThrust { t, thrust: u1 });
        }
        prev = Some(r);
    }
    Ok(())
}
