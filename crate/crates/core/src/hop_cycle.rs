//! Touchdown detection, the stance map and cross-hop bookkeeping.
//!
//! The robot is modelled with a rigid foot at `r − l z_B`. Stance is a
//! discrete jump: the liftoff velocity is the touchdown speed scaled by
//! `√η_e` along the body z-axis, and roll/pitch drift under the gravity
//! moment about the foot for the stance duration.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{euler_rates, euler_to_rotation, sgn, State12};
use crate::error::{DynamicsError, HopError, ParamsError};
use crate::params::RobotParams;

pub const DEFAULT_FOOT_LENGTH: f64 = 0.2;

/// A contact plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Surface {
    /// Horizontal plane `z = z0`, free side above.
    Ground { z0: f64 },
    /// Vertical plane through `point` whose unit `normal` points to the free side.
    Wall { point: [f64; 3], normal: [f64; 3] },
}

impl Surface {
    pub fn validate(&self) -> Result<(), ParamsError> {
        match *self {
            Surface::Ground { z0 } if z0.is_finite() => Ok(()),
            Surface::Ground { .. } => Err(ParamsError::Invalid("ground height must be finite".into())),
            Surface::Wall { point, normal } => {
                let n = Vector3::from(normal);
                if !point.iter().all(|v| v.is_finite()) || !n.iter().all(|v| v.is_finite()) {
                    return Err(ParamsError::Invalid("wall point and normal must be finite".into()));
                }
                if n[2].abs() > 1e-12 || (n.norm() - 1.0).abs() > 1e-9 {
                    return Err(ParamsError::Invalid(format!("wall normal {normal:?} must be a horizontal unit vector")));
                }
                Ok(())
            }
        }
    }

    /// Inward unit normal.
    pub fn normal(&self) -> Vector3<f64> {
        match *self {
            Surface::Ground { .. } => Vector3::z(),
            Surface::Wall { normal, .. } => Vector3::from(normal),
        }
    }

    /// Signed distance of `p` from the plane, positive on the free side.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Surface::Ground { z0 } => p[2] - z0,
            Surface::Wall { point, normal } => Vector3::from(normal).dot(&(p - Vector3::from(point))),
        }
    }

    /// World axis the normal is aligned with, if any.
    pub fn normal_axis(&self) -> Option<usize> {
        let n = self.normal();
        (0..3).find(|&i| (n[i].abs() - 1.0).abs() < 1e-12)
    }

    /// Coordinate along [`Self::normal_axis`] of the plane.
    pub fn plane_coordinate(&self) -> Option<f64> {
        match *self {
            Surface::Ground { z0 } => Some(z0),
            Surface::Wall { point, .. } => self.normal_axis().map(|i| point[i]),
        }
    }
}

/// Foot tip position.
pub fn foot_tip(state: &State12, foot_len: f64) -> Result<Vector3<f64>, DynamicsError> {
    let z_b = state.rotation()?.column(2).into_owned();
    Ok(state.position - foot_len * z_b)
}

/// Foot tip velocity `ṙ − l Ṙ e_z`.
pub fn foot_velocity(state: &State12, foot_len: f64) -> Result<Vector3<f64>, DynamicsError> {
    let r = state.rotation()?;
    Ok(state.velocity - foot_len * r * state.rates.cross(&Vector3::z()))
}

/// Foot-tip clearance above `surface`.
pub fn foot_clearance(state: &State12, surface: &Surface, foot_len: f64) -> Result<f64, DynamicsError> {
    Ok(surface.signed_distance(&foot_tip(state, foot_len)?))
}

/// Outcome of a contact check over one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub in_contact: bool,
    /// Interpolated contact time; equals the step end when not in contact.
    pub t: f64,
    /// Clearance at the step end.
    pub clearance: f64,
}

/// Contact check over the step `prev → cur`.
///
/// Contact is reported when the foot tip reaches the plane while moving
/// inward. The contact time is interpolated linearly in the clearance, which
/// is exact to `O(dt²)`. With no previous state only the current one is
/// checked.
pub fn detect_touchdown(
    prev: Option<(f64, &State12)>,
    cur: (f64, &State12),
    surface: &Surface,
    foot_len: f64,
) -> Result<Contact, DynamicsError> {
    let (t1, s1) = cur;
    let d1 = foot_clearance(s1, surface, foot_len)?;
    let none = Contact { in_contact: false, t: t1, clearance: d1 };
    let inward = surface.normal().dot(&foot_velocity(s1, foot_len)?) < 0.0;
    if d1 > 0.0 || !inward {
        return Ok(none);
    }
    match prev {
        None => Ok(Contact { in_contact: true, t: t1, clearance: d1 }),
        Some((t0, s0)) => {
            let d0 = foot_clearance(s0, surface, foot_len)?;
            if d0 <= 0.0 {
                // already through the plane at the previous step: not a new crossing
                return Ok(none);
            }
            let t = t0 + (t1 - t0) * d0 / (d0 - d1);
            Ok(Contact { in_contact: true, t: t.clamp(t0, t1), clearance: d1 })
        }
    }
}

/// Discrete stance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StanceModel {
    /// Fraction of kinetic energy kept through stance.
    pub eta_e: f64,
    /// Stance duration (s).
    pub t_s: f64,
    pub apply_gravity_torque: bool,
    /// Largest foot clearance (m) still treated as contact.
    pub contact_tolerance: f64,
}

impl Default for StanceModel {
    fn default() -> Self {
        Self { eta_e: 0.9, t_s: 0.08, apply_gravity_torque: true, contact_tolerance: 0.05 }
    }
}

impl StanceModel {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.eta_e > 0.0 && self.eta_e <= 1.0) {
            return Err(ParamsError::Invalid(format!("eta_e must lie in (0, 1], got {}", self.eta_e)));
        }
        if !(self.t_s >= 0.0 && self.t_s.is_finite()) {
            return Err(ParamsError::Invalid(format!("t_s must be >= 0, got {}", self.t_s)));
        }
        if !(self.contact_tolerance >= 0.0) {
            return Err(ParamsError::Invalid("contact tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

const STANCE_STEP: f64 = 1e-4;

/// Roll/pitch after pivoting about a fixed foot under gravity for `t_s`,
/// starting at rest. Yaw is held.
pub fn gravity_tilt(params: &RobotParams, euler: &Vector3<f64>, foot_len: f64, t_s: f64) -> Result<Vector3<f64>, DynamicsError> {
    if t_s <= 0.0 {
        return Ok(*euler);
    }
    let m = params.mass;
    let ml2 = m * foot_len * foot_len;
    let [ix, iy, iz] = params.inertia;
    let inv_i = Matrix3::from_diagonal(&Vector3::new(1.0 / (ix + ml2), 1.0 / (iy + ml2), 1.0 / iz));
    let weight = Vector3::new(0.0, 0.0, -m * params.g);
    let deriv = |e: &Vector3<f64>, w: &Vector3<f64>| -> Result<(Vector3<f64>, Vector3<f64>), DynamicsError> {
        let r = euler_to_rotation(e)?;
        let arm = foot_len * r.column(2);
        let torque_b = r.transpose() * arm.cross(&weight);
        Ok((euler_rates(e, w)?, inv_i * torque_b))
    };
    let steps = (t_s / STANCE_STEP).ceil().max(1.0) as usize;
    let h = t_s / steps as f64;
    let (mut e, mut w) = (*euler, Vector3::zeros());
    for _ in 0..steps {
        let (k1e, k1w) = deriv(&e, &w)?;
        let (k2e, k2w) = deriv(&(e + 0.5 * h * k1e), &(w + 0.5 * h * k1w))?;
        let (k3e, k3w) = deriv(&(e + 0.5 * h * k2e), &(w + 0.5 * h * k2w))?;
        let (k4e, k4w) = deriv(&(e + h * k3e), &(w + h * k3w))?;
        e += (k1e + 2.0 * k2e + 2.0 * k3e + k4e) * (h / 6.0);
        w += (k1w + 2.0 * k2w + 2.0 * k3w + k4w) * (h / 6.0);
    }
    e[2] = euler[2];
    Ok(e)
}

/// Liftoff state from a touchdown state.
///
/// Position is held, the velocity becomes `‖v_TD‖ √η_e z_B(x_TD)` (or
/// `next_lo_speed z_B` when given), roll and pitch optionally drift under
/// gravity, and the body rates are zeroed.
pub fn stance_map(
    params: &RobotParams,
    x_td: &State12,
    surface: &Surface,
    foot_len: f64,
    model: &StanceModel,
    next_lo_speed: Option<f64>,
) -> Result<State12, HopError> {
    let clearance = foot_clearance(x_td, surface, foot_len)?;
    if clearance.abs() > model.contact_tolerance {
        return Err(HopError::NonContact { clearance });
    }
    let z_b = x_td.rotation()?.column(2).into_owned();
    // a body tipped past the surface plane has crashed rather than landed
    let dot = z_b.dot(&surface.normal());
    if !(dot > 0.0) {
        return Err(HopError::LegAway { dot });
    }
    let speed = next_lo_speed.unwrap_or_else(|| x_td.velocity.norm() * model.eta_e.sqrt());
    let euler = if model.apply_gravity_torque {
        gravity_tilt(params, &x_td.euler, foot_len, model.t_s)?
    } else {
        x_td.euler
    };
    Ok(State12::new(x_td.position, speed * z_b, euler, Vector3::zeros()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiltAxis {
    Roll,
    Pitch,
}

/// Per-axis multiplicative correction of the desired touchdown roll/pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaAdapter {
    pub gamma_phi: f64,
    pub gamma_theta: f64,
    pub mu: f64,
}

impl Default for GammaAdapter {
    fn default() -> Self {
        Self { gamma_phi: 1.0, gamma_theta: 1.0, mu: 0.1 }
    }
}

impl GammaAdapter {
    pub fn with_mu(mu: f64) -> Self {
        Self { mu, ..Self::default() }
    }

    /// `γ ← γ − μ sign(β_TD) sign(β_LO) |β_TD − β_LO|`.
    pub fn update(&mut self, beta_td: f64, beta_lo: f64, axis: TiltAxis) {
        let step = self.mu * sgn(beta_td) * sgn(beta_lo) * (beta_td - beta_lo).abs();
        match axis {
            TiltAxis::Roll => self.gamma_phi -= step,
            TiltAxis::Pitch => self.gamma_theta -= step,
        }
    }

    /// `(φ γ_φ, θ γ_θ)`.
    pub fn apply(&self, phi: f64, theta: f64) -> (f64, f64) {
        (phi * self.gamma_phi, theta * self.gamma_theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopPhase {
    Aerial,
    Stance,
}

impl HopPhase {
    pub fn code(self) -> u8 {
        match self {
            HopPhase::Aerial => 0,
            HopPhase::Stance => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(HopPhase::Aerial),
            1 => Some(HopPhase::Stance),
            _ => None,
        }
    }
}

/// A phase change at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransition {
    pub phase: HopPhase,
    pub t: f64,
}

/// Jump in `V` across one stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridReport {
    pub v_td: f64,
    pub v_lo: f64,
    pub delta_v: f64,
    pub bound: f64,
    pub ok: bool,
}

pub const DEFAULT_HYBRID_BOUND: f64 = 0.0;
pub const HYBRID_TOLERANCE: f64 = 1e-6;

/// Reports `ΔV = V_LO − V_TD` against `bound + 1e-6`.
pub fn hybrid_check(v_td: f64, v_lo: f64, bound: f64) -> HybridReport {
    let delta_v = v_lo - v_td;
    HybridReport { v_td, v_lo, delta_v, bound, ok: delta_v <= bound + HYBRID_TOLERANCE }
}
