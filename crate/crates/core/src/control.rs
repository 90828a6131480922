//! Lyapunov-based tracking controller.
//!
//! Errors are `e = x_d − x`. Translational position and velocity errors are
//! rotated into the body frame with the actual attitude, and the lateral
//! (`y`) channel is mirrored so that a positive roll error drives the robot
//! toward the target. Four composite errors
//!
//! ```text
//! e_U1 = k_pz e_z + k_dz ė_z
//! e_U2 = k_py e_y + k_dy ė_y + k_pφ e_φ + k_dφ e_p
//! e_U3 = k_px e_x + k_dx ė_x + k_pθ e_θ + k_dθ e_q
//! e_U4 = k_pψ e_ψ + k_dψ e_r
//! ```
//!
//! define `V = ½ Σ e_Ui²`, and the inputs are chosen so that, under the
//! modelling assumptions of the law, `V̇ = −½ Σ k_Ui e_Ui²`.

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    euler_to_rotation_unchecked, expanded_drag_terms, mixing_matrix, wrap_angle, ControlInput, State12,
};
use crate::error::ParamsError;
use crate::flatness::FlatState;
use crate::params::RobotParams;

/// Controller gains, interleaved `[k_p, k_d]` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    /// `[k_px, k_dx, k_py, k_dy, k_pz, k_dz]`.
    pub translational: [f64; 6],
    /// `[k_pφ, k_dφ, k_pθ, k_dθ, k_pψ, k_dψ]`.
    pub rotational: [f64; 6],
    /// `[k_U1, k_U2, k_U3, k_U4]`.
    pub lyapunov: [f64; 4],
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            translational: [10.0, 1.0, 10.0, 1.0, 10.0, 1.0],
            rotational: [30.0, 1.0, 30.0, 1.0, 30.0, 1.0],
            lyapunov: [10.0, 80.0, 80.0, 80.0],
        }
    }
}

impl Gains {
    /// Proportional gain for axis `0..6` = `x, y, z, φ, θ, ψ`.
    pub fn kp(&self, axis: usize) -> f64 {
        self.pair(axis).0
    }

    /// Derivative gain for axis `0..6` = `x, y, z, φ, θ, ψ`.
    pub fn kd(&self, axis: usize) -> f64 {
        self.pair(axis).1
    }

    fn pair(&self, axis: usize) -> (f64, f64) {
        let src = if axis < 3 { &self.translational } else { &self.rotational };
        let i = axis % 3;
        (src[2 * i], src[2 * i + 1])
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        for axis in 0..6 {
            if !(self.kp(axis) >= 0.0 && self.kp(axis).is_finite()) {
                return Err(ParamsError::Invalid(format!("proportional gain {axis} must be >= 0")));
            }
            if !(self.kd(axis) > 0.0 && self.kd(axis).is_finite()) {
                return Err(ParamsError::Invalid(format!("derivative gain {axis} must be > 0")));
            }
        }
        if self.lyapunov.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(ParamsError::Invalid("Lyapunov gains must be > 0".into()));
        }
        Ok(())
    }

    /// Every Lyapunov gain multiplied by `factor`.
    pub fn scale_lyapunov(&self, factor: f64) -> Self {
        Self { lyapunov: self.lyapunov.map(|k| k * factor), ..*self }
    }
}

/// Tracking errors and composites.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    /// Body-frame position error, `y` mirrored.
    pub pos: Vector3<f64>,
    /// Body-frame velocity error, `y` mirrored.
    pub vel: Vector3<f64>,
    /// Euler-angle error; yaw wrapped to `(−π, π]`.
    pub angles: Vector3<f64>,
    /// Body-rate error.
    pub rates: Vector3<f64>,
    /// `e_U1 … e_U4`.
    pub composite: [f64; 4],
    /// `½ Σ e_Ui²`.
    pub v: f64,
}

/// Saturation events of one control update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Saturation {
    pub thrust_low: bool,
    pub thrust_high: bool,
    /// Some rotor needed a negative squared speed.
    pub rotor_low: bool,
    /// Some rotor exceeded the speed cap.
    pub rotor_high: bool,
}

impl Saturation {
    pub fn any(&self) -> bool {
        self.thrust_low || self.thrust_high || self.rotor_low || self.rotor_high
    }
}

/// Result of one control update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    /// Input actually applied after saturation.
    pub input: ControlInput,
    /// Unsaturated control law.
    pub raw: ControlInput,
    pub errors: ErrorState,
    pub v_dot_design: f64,
    pub saturation: Saturation,
}

/// `(V, V̇_design)` = `(½ Σ e_Ui², −½ Σ k_Ui e_Ui²)`.
pub fn lyapunov_rate(gains: &Gains, errors: &ErrorState) -> (f64, f64) {
    let e = &errors.composite;
    let v = 0.5 * e.iter().map(|x| x * x).sum::<f64>();
    let v_dot = -0.5 * e.iter().zip(&gains.lyapunov).map(|(x, k)| k * x * x).sum::<f64>();
    (v, v_dot)
}

/// Mirror of the lateral body axis.
const MIRROR_Y: Vector3<f64> = Vector3::new(1.0, -1.0, 1.0);

fn composites(gains: &Gains, pos: &Vector3<f64>, vel: &Vector3<f64>, ang: &Vector3<f64>, rates: &Vector3<f64>) -> [f64; 4] {
    let g = gains;
    [
        g.kp(2) * pos[2] + g.kd(2) * vel[2],
        g.kp(1) * pos[1] + g.kd(1) * vel[1] + g.kp(3) * ang[0] + g.kd(3) * rates[0],
        g.kp(0) * pos[0] + g.kd(0) * vel[0] + g.kp(4) * ang[1] + g.kd(4) * rates[1],
        g.kp(5) * ang[2] + g.kd(5) * rates[2],
    ]
}

/// Errors of `state` against `desired`.
pub fn compute_errors(gains: &Gains, state: &State12, desired: &FlatState) -> ErrorState {
    let r = euler_to_rotation_unchecked(&state.euler);
    compute_errors_with(gains, state, desired, &r)
}

fn compute_errors_with(gains: &Gains, state: &State12, desired: &FlatState, r: &Matrix3<f64>) -> ErrorState {
    let xd = &desired.x_d;
    let rt = r.transpose();
    let pos = (rt * (xd.position - state.position)).component_mul(&MIRROR_Y);
    let vel = (rt * (xd.velocity - state.velocity)).component_mul(&MIRROR_Y);
    let mut angles = xd.euler - state.euler;
    for a in angles.iter_mut() {
        *a = wrap_angle(*a);
    }
    let rates = xd.rates - state.rates;
    let composite = composites(gains, &pos, &vel, &angles, &rates);
    let v = 0.5 * composite.iter().map(|x| x * x).sum::<f64>();
    ErrorState { pos, vel, angles, rates, composite, v }
}

/// The control law without saturation. `U2..U4` are returned as torques
/// (N·m); the arm `L_t` that scales the roll and pitch laws cancels.
pub fn control_law(params: &RobotParams, gains: &Gains, state: &State12, desired: &FlatState) -> (ControlInput, ErrorState) {
    let r = euler_to_rotation_unchecked(&state.euler);
    let e = compute_errors_with(gains, state, desired, &r);
    let (d_lin, d_rot) = expanded_drag_terms(params, &r, state);
    let m = params.mass;
    let g = params.g;
    let [ix, iy, iz] = params.inertia;
    let (p, q, rr) = (state.rates[0], state.rates[1], state.rates[2]);

    // σ1 = −z_B·D/m + g cφcθ, σ2 = −y_B·D/m + g cθsφ, σ3 = x_B·D/m + g sθ
    let x_b = r.column(0);
    let y_b = r.column(1);
    let z_b = r.column(2);
    let sigma1 = -z_b.dot(&d_lin) / m + g * r[(2, 2)];
    let sigma2 = -y_b.dot(&d_lin) / m + g * r[(2, 1)];
    let sigma3 = x_b.dot(&d_lin) / m - g * r[(2, 0)];

    let acc_d = r.transpose() * desired.accel;
    let (xdd_d, ydd_d, zdd_d) = (acc_d[0], acc_d[1], acc_d[2]);
    let [pd_dot, qd_dot, rd_dot] = [desired.ang_accel[0], desired.ang_accel[1], desired.ang_accel[2]];
    let [eu1, eu2, eu3, _] = e.composite;
    let [ku1, ku2, ku3, ku4] = gains.lyapunov;
    let (kpx, kdx, kpy, kdy, kpz, kdz) = (gains.kp(0), gains.kd(0), gains.kp(1), gains.kd(1), gains.kp(2), gains.kd(2));
    let (kpf, kdf, kpt, kdt, kpp, kdp) = (gains.kp(3), gains.kd(3), gains.kp(4), gains.kd(4), gains.kp(5), gains.kd(5));

    let u1 = m * ((zdd_d + sigma1) + e.vel[2] * kpz) + ku1 * m * eu1 / (2.0 * kdz);
    // lateral acceleration error in the mirrored channel
    let y_acc_err = -(ydd_d + sigma2);
    let tau_phi = ix * (kdy * y_acc_err + e.vel[1] * kpy + e.rates[0] * kpf) / kdf
        - ix * (d_rot[0] / ix - pd_dot + rr * q * (iy - iz) / ix)
        + ix * ku2 * eu2 / (2.0 * kdf);
    let tau_theta = iy * (e.vel[0] * kpx + e.rates[1] * kpt - kdx * (-xdd_d + sigma3)) / kdt
        + iy * (qd_dot - d_rot[1] / iy + p * rr * (ix - iz) / iy)
        + iy * ku3 * eu3 / (2.0 * kdt);
    let tau_psi = iz * rd_dot - d_rot[2] + (iz * e.rates[2] * kpp + iz * e.angles[2] * ku4 * kpp / 2.0) / kdp;
    (ControlInput::new(u1, tau_phi, tau_theta, tau_psi), e)
}

/// Control law followed by thrust clamping and rotor-speed projection.
///
/// When a rotor would leave `[0, ω_max]`, the collective thrust is kept and
/// the torques are shrunk uniformly, yaw first, until every rotor fits.
pub fn control(params: &RobotParams, gains: &Gains, state: &State12, desired: &FlatState) -> ControlOutput {
    let (raw, errors) = control_law(params, gains, state, desired);
    let (_, v_dot_design) = lyapunov_rate(gains, &errors);
    let mut sat = Saturation::default();
    let max_thrust = params.max_thrust();
    let mut u = raw;
    if !(u.u1 >= 0.0) {
        u.u1 = 0.0;
        sat.thrust_low = true;
    } else if u.u1 > max_thrust {
        u.u1 = max_thrust;
        sat.thrust_high = true;
    }
    let m_inv = mixing_matrix(params).try_inverse().expect("mixing matrix is invertible");
    let hi = params.omega_rotor_max * params.omega_rotor_max;
    let base = m_inv * Vector4::new(u.u1, 0.0, 0.0, 0.0);
    let rp = m_inv * Vector4::new(0.0, u.u2, u.u3, 0.0);
    let yaw = m_inv * Vector4::new(0.0, 0.0, 0.0, u.u4);
    let full = base + rp + yaw;
    if full.iter().any(|&w| w < 0.0 || w > hi) {
        sat.rotor_low = full.iter().any(|&w| w < 0.0);
        sat.rotor_high = full.iter().any(|&w| w > hi);
        // collective thrust is kept; yaw torque gives way before roll/pitch
        let (a_rp, a_yaw) = if within(&(base + rp), hi) {
            (1.0, max_scale(&(base + rp), &yaw, hi))
        } else {
            (max_scale(&base, &rp, hi), 0.0)
        };
        u = ControlInput::new(u.u1, a_rp * u.u2, a_rp * u.u3, a_yaw * u.u4);
    }
    ControlOutput { input: u, raw, errors, v_dot_design, saturation: sat }
}

fn within(w: &Vector4<f64>, hi: f64) -> bool {
    w.iter().all(|&x| (0.0..=hi).contains(&x))
}

/// Largest `α ∈ [0, 1]` with `a + α b` inside `[0, hi]` componentwise, for
/// `a` already inside.
fn max_scale(a: &Vector4<f64>, b: &Vector4<f64>, hi: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..4 {
        if b[i] < 0.0 {
            alpha = alpha.min(a[i].max(0.0) / -b[i]);
        } else if b[i] > 0.0 {
            alpha = alpha.min((hi - a[i]).max(0.0) / b[i]);
        }
    }
    alpha.max(0.0)
}
