//! Aerial-phase rigid-body model.
//!
//! Newton–Euler equations about the centre of mass with nonlinear
//! (Hadamard-squared) translational and rotational drag:
//!
//! ```text
//! m r̈ = −m g z_W + U1 z_B − D_T        D_T = sign(ṙ) ∘ (R C_T) ṙ²
//! I ω̇ = −ω × I ω + [U2 U3 U4]ᵀ − D_R    D_R = sign(ω) ∘ C_R ω²
//! ```
//!
//! The component-wise form used by the controller writes the drag with a plus
//! sign (`ẍ = (… U1 + D_x)/m`). Both forms agree when `D_x, D_y, D_z` are the
//! components of `−D_T` and `D_φ, D_θ, D_ψ` the components of `−D_R`; see
//! [`expanded_drag_terms`].

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;
use crate::params::RobotParams;

/// Closest approach to |θ| = π/2 tolerated by the ZYX parameterisation.
pub const EULER_SINGULARITY_MARGIN: f64 = 1e-6;

/// 12-state vector `[x y z ẋ ẏ ż φ θ ψ p q r]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State12 {
    /// World position of the centre of mass (m).
    pub position: Vector3<f64>,
    /// World velocity (m/s).
    pub velocity: Vector3<f64>,
    /// ZYX Euler angles (φ, θ, ψ) in rad.
    pub euler: Vector3<f64>,
    /// Body rates (p, q, r) in rad/s.
    pub rates: Vector3<f64>,
}

impl State12 {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, euler: Vector3<f64>, rates: Vector3<f64>) -> Self {
        Self { position, velocity, euler, rates }
    }

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            out[i] = self.position[i];
            out[3 + i] = self.velocity[i];
            out[6 + i] = self.euler[i];
            out[9 + i] = self.rates[i];
        }
        out
    }

    pub fn from_array(a: &[f64; 12]) -> Self {
        Self {
            position: Vector3::new(a[0], a[1], a[2]),
            velocity: Vector3::new(a[3], a[4], a[5]),
            euler: Vector3::new(a[6], a[7], a[8]),
            rates: Vector3::new(a[9], a[10], a[11]),
        }
    }

    pub fn rotation(&self) -> Result<Matrix3<f64>, DynamicsError> {
        euler_to_rotation(&self.euler)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    fn axpy(&self, k: f64, d: &State12) -> State12 {
        State12 {
            position: self.position + d.position * k,
            velocity: self.velocity + d.velocity * k,
            euler: self.euler + d.euler * k,
            rates: self.rates + d.rates * k,
        }
    }
}

/// Collective thrust and body torques.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Collective thrust (N).
    pub u1: f64,
    /// Roll torque (N·m).
    pub u2: f64,
    /// Pitch torque (N·m).
    pub u3: f64,
    /// Yaw torque (N·m).
    pub u4: f64,
}

impl ControlInput {
    pub fn new(u1: f64, u2: f64, u3: f64, u4: f64) -> Self {
        Self { u1, u2, u3, u4 }
    }

    pub fn hover(params: &RobotParams) -> Self {
        Self::new(params.weight(), 0.0, 0.0, 0.0)
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.u1, self.u2, self.u3, self.u4)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn torque(&self) -> Vector3<f64> {
        Vector3::new(self.u2, self.u3, self.u4)
    }
}

/// Rotor angular speeds Ω_m1..Ω_m4 (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotorSpeeds(pub [f64; 4]);

/// Result of mapping a control input back onto rotor speeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMixing {
    pub speeds: RotorSpeeds,
    /// Rotors whose squared speed was negative and clamped to zero.
    pub clamped_low: [bool; 4],
    /// Rotors clamped at `omega_rotor_max`.
    pub clamped_high: [bool; 4],
    /// Some squared speed fell below −1e-9, i.e. the input is not realisable.
    pub infeasible: bool,
}

impl InverseMixing {
    pub fn saturated(&self) -> bool {
        self.clamped_low.iter().chain(self.clamped_high.iter()).any(|&c| c)
    }
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sgn_vec(v: &Vector3<f64>) -> Vector3<f64> {
    v.map(sgn)
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Body-to-world rotation `R_BW = Rz(ψ) Ry(θ) Rx(φ)`; columns are the body axes.
pub fn euler_to_rotation(euler: &Vector3<f64>) -> Result<Matrix3<f64>, DynamicsError> {
    let theta = euler[1];
    if !euler.iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    if theta.abs() >= std::f64::consts::FRAC_PI_2 - EULER_SINGULARITY_MARGIN {
        return Err(DynamicsError::EulerSingularity { theta });
    }
    Ok(euler_to_rotation_unchecked(euler))
}

pub(crate) fn euler_to_rotation_unchecked(euler: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = euler[0].sin_cos();
    let (st, ct) = euler[1].sin_cos();
    let (sp, cp) = euler[2].sin_cos();
    Matrix3::new(
        cp * ct,
        cp * st * sf - sp * cf,
        cp * st * cf + sp * sf,
        sp * ct,
        sp * st * sf + cp * cf,
        sp * st * cf - cp * sf,
        -st,
        ct * sf,
        ct * cf,
    )
}

/// ZYX Euler angles of a rotation matrix.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> Vector3<f64> {
    let theta = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let phi = r[(2, 1)].atan2(r[(2, 2)]);
    let psi = r[(1, 0)].atan2(r[(0, 0)]);
    Vector3::new(phi, theta, psi)
}

/// Translational drag `D_T` in the world frame (enters `m r̈` with a minus sign).
pub fn translational_drag(params: &RobotParams, r_bw: &Matrix3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let rc = r_bw * params.c_t();
    sgn_vec(v).component_mul(&(rc * v.component_mul(v)))
}

/// Rotational drag `D_R` in the body frame.
pub fn rotational_drag(params: &RobotParams, omega: &Vector3<f64>) -> Vector3<f64> {
    sgn_vec(omega).component_mul(&(params.c_r() * omega.component_mul(omega)))
}

/// Drag terms in the sign convention of the expanded equations:
/// `([D_x, D_y, D_z], [D_φ, D_θ, D_ψ]) = (−D_T, −D_R)`.
pub fn expanded_drag_terms(
    params: &RobotParams,
    r_bw: &Matrix3<f64>,
    state: &State12,
) -> (Vector3<f64>, Vector3<f64>) {
    (
        -translational_drag(params, r_bw, &state.velocity),
        -rotational_drag(params, &state.rates),
    )
}

/// ZYX Euler-angle rates from body rates.
pub fn euler_rates(euler: &Vector3<f64>, rates: &Vector3<f64>) -> Result<Vector3<f64>, DynamicsError> {
    let theta = euler[1];
    if theta.abs() >= std::f64::consts::FRAC_PI_2 - EULER_SINGULARITY_MARGIN {
        return Err(DynamicsError::EulerSingularity { theta });
    }
    let (sf, cf) = euler[0].sin_cos();
    let (st, ct) = theta.sin_cos();
    let tt = st / ct;
    let (p, q, r) = (rates[0], rates[1], rates[2]);
    Ok(Vector3::new(
        p + sf * tt * q + cf * tt * r,
        cf * q - sf * r,
        (sf * q + cf * r) / ct,
    ))
}

/// Time derivative of the 12-state under input `u`.
pub fn state_derivative(params: &RobotParams, state: &State12, u: &ControlInput) -> Result<State12, DynamicsError> {
    let r_bw = state.rotation()?;
    let (d_lin, d_rot) = expanded_drag_terms(params, &r_bw, state);
    let (sf, cf) = state.euler[0].sin_cos();
    let (st, ct) = state.euler[1].sin_cos();
    let (sp, cp) = state.euler[2].sin_cos();
    let m = params.mass;
    let accel = Vector3::new(
        ((cf * st * cp + sf * sp) * u.u1 + d_lin[0]) / m,
        ((cf * st * sp - sf * cp) * u.u1 + d_lin[1]) / m,
        -params.g + (cf * ct * u.u1 + d_lin[2]) / m,
    );
    let [ix, iy, iz] = params.inertia;
    let (p, q, r) = (state.rates[0], state.rates[1], state.rates[2]);
    let ang_accel = Vector3::new(
        (q * r * (iy - iz) + u.u2 + d_rot[0]) / ix,
        (p * r * (iz - ix) + u.u3 + d_rot[1]) / iy,
        (p * q * (ix - iy) + u.u4 + d_rot[2]) / iz,
    );
    Ok(State12 {
        position: state.velocity,
        velocity: accel,
        euler: euler_rates(&state.euler, &state.rates)?,
        rates: ang_accel,
    })
}

/// The 4×4 map from squared rotor speeds to `[U1 U2 U3 U4]`.
pub fn mixing_matrix(params: &RobotParams) -> Matrix4<f64> {
    let t = params.zeta_t;
    let tl = params.zeta_t * params.arm_length;
    let d = params.zeta_d;
    Matrix4::new(
        t, t, t, t, //
        -tl, -tl, tl, tl, //
        -tl, tl, tl, -tl, //
        d, -d, d, -d,
    )
}

pub fn input_mixing(params: &RobotParams, rotor: &RotorSpeeds) -> ControlInput {
    let sq = Vector4::from(rotor.0).map(|w| w * w);
    ControlInput::from_vector(&(mixing_matrix(params) * sq))
}

pub fn inverse_mixing(params: &RobotParams, u: &ControlInput) -> InverseMixing {
    let m_inv = mixing_matrix(params)
        .try_inverse()
        .expect("mixing matrix is invertible for positive zeta_t, zeta_d, L_m");
    let sq = m_inv * u.to_vector();
    let max = params.omega_rotor_max;
    let mut out = InverseMixing {
        speeds: RotorSpeeds([0.0; 4]),
        clamped_low: [false; 4],
        clamped_high: [false; 4],
        infeasible: false,
    };
    for i in 0..4 {
        let s = sq[i];
        if s < -1e-9 {
            out.infeasible = true;
        }
        if s < 0.0 {
            out.clamped_low[i] = s < -1e-9;
        }
        let mut w = s.max(0.0).sqrt();
        if w > max {
            w = max;
            out.clamped_high[i] = true;
        }
        out.speeds.0[i] = w;
    }
    out
}

/// One classical fourth-order Runge–Kutta step.
pub fn integrate_step(params: &RobotParams, state: &State12, u: &ControlInput, dt: f64) -> Result<State12, DynamicsError> {
    debug_assert!(dt > 0.0);
    let k1 = state_derivative(params, state, u)?;
    let k2 = state_derivative(params, &state.axpy(0.5 * dt, &k1), u)?;
    let k3 = state_derivative(params, &state.axpy(0.5 * dt, &k2), u)?;
    let k4 = state_derivative(params, &state.axpy(dt, &k3), u)?;
    let next = State12 {
        position: state.position + (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position) * (dt / 6.0),
        velocity: state.velocity + (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) * (dt / 6.0),
        euler: state.euler + (k1.euler + 2.0 * k2.euler + 2.0 * k3.euler + k4.euler) * (dt / 6.0),
        rates: state.rates + (k1.rates + 2.0 * k2.rates + 2.0 * k3.rates + k4.rates) * (dt / 6.0),
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    Ok(next)
}

/// Kinetic plus potential energy (J).
pub fn mechanical_energy(params: &RobotParams, state: &State12) -> f64 {
    let i = params.inertia_vec();
    0.5 * params.mass * state.velocity.norm_squared()
        + params.weight() * state.position[2]
        + 0.5 * state.rates.component_mul(&state.rates).dot(&i)
}
