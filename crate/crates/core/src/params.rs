//! Robot parameter set.
//!
//! Parameters are read from JSON with keys named after the model symbols
//! (`m_r`, `I_r`, `zeta_t`, ...), all in SI units. The drag matrices already
//! include air density and effective area.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ParamsError;

/// The nominal parameter file shipped with the crate.
pub const NOMINAL_PARAMS_JSON: &str = include_str!("../config/nominal_params.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Mass (kg).
    #[serde(rename = "m_r")]
    pub mass: f64,
    /// Diagonal of the inertia matrix (kg·m²).
    #[serde(rename = "I_r")]
    pub inertia: [f64; 3],
    /// Gravity (m/s²).
    pub g: f64,
    /// Rotor thrust factor (N·s²).
    pub zeta_t: f64,
    /// Rotor drag factor (N·m·s²).
    pub zeta_d: f64,
    /// Distance from the rotor centres to the roll and pitch axes (m).
    #[serde(rename = "L_m")]
    pub arm_length: f64,
    /// Torque arm used by the control law (m). Defaults to `L_m` when absent.
    #[serde(rename = "L_t", default)]
    pub torque_arm: Option<f64>,
    /// Translational drag matrix in the body frame (kg/m), row-major.
    #[serde(rename = "C_T")]
    pub drag_translational: [[f64; 3]; 3],
    /// Rotational drag matrix (kg·m²), row-major.
    #[serde(rename = "C_R")]
    pub drag_rotational: [[f64; 3]; 3],
    /// Rotor speed cap (rad/s).
    pub omega_rotor_max: f64,
}

impl RobotParams {
    pub fn nominal() -> Self {
        serde_json::from_str(NOMINAL_PARAMS_JSON).expect("bundled nominal parameters are valid JSON")
    }

    pub fn from_json_str(s: &str) -> Result<Self, ParamsError> {
        let params: RobotParams = serde_json::from_str(s)?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ParamsError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ParamsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = [
            ("m_r", self.mass),
            ("I_x", self.inertia[0]),
            ("I_y", self.inertia[1]),
            ("I_z", self.inertia[2]),
            ("g", self.g),
            ("zeta_t", self.zeta_t),
            ("zeta_d", self.zeta_d),
            ("L_m", self.arm_length),
            ("L_t", self.l_t()),
            ("omega_rotor_max", self.omega_rotor_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::Invalid(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        for (name, m) in [("C_T", &self.drag_translational), ("C_R", &self.drag_rotational)] {
            if m.iter().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(ParamsError::Invalid(format!("{name} entries must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Control torque arm; falls back to the rotor arm length.
    pub fn l_t(&self) -> f64 {
        self.torque_arm.unwrap_or(self.arm_length)
    }

    pub fn inertia_vec(&self) -> Vector3<f64> {
        Vector3::from(self.inertia)
    }

    pub fn c_t(&self) -> Matrix3<f64> {
        mat3(&self.drag_translational)
    }

    pub fn c_r(&self) -> Matrix3<f64> {
        mat3(&self.drag_rotational)
    }

    /// Scalar stand-in for an isotropic `C_T` (mean of the diagonal).
    pub fn c_t_scalar(&self) -> f64 {
        (0..3).map(|i| self.drag_translational[i][i]).sum::<f64>() / 3.0
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.g
    }

    /// Largest collective thrust the rotors can produce.
    pub fn max_thrust(&self) -> f64 {
        4.0 * self.zeta_t * self.omega_rotor_max * self.omega_rotor_max
    }

    /// Same parameters with both drag matrices zeroed.
    pub fn without_drag(&self) -> Self {
        Self {
            drag_translational: [[0.0; 3]; 3],
            drag_rotational: [[0.0; 3]; 3],
            ..self.clone()
        }
    }
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::nominal()
    }
}

fn mat3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}
