//! Scenario files.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "name": "ground-state",
//!   "params": "params.json",            // optional, relative to the file
//!   "gains": { ... },                    // optional, see `Gains`
//!   "surfaces": [{ "kind": "ground", "z0": 0.0 }],
//!   "initial": { "position": [0, 0, 0.1732], "euler_deg": [0, 30, 0], "speed": 5.0 },
//!   "hops": [{
//!     "type": "T3", "surface": 0, "td_euler_deg": [0, 0, 0], "v_td": 5.0,
//!     "td_position": [1.5, 0.0, null], "t_m": 1.75, "delta_t": 0.05
//!   }],
//!   "total_time": 6.0
//! }
//! ```
//!
//! Touchdown positions on axes the trajectory type fixes come from
//! `td_position` (offsets from the liftoff position unless `relative` is
//! false), except the axis normal to the hop's surface, which is placed so the
//! foot tip lands on the plane. After the last plan entry the plan restarts at
//! `cycle_from` (default: the last entry).

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::Gains;
use crate::dynamics::{euler_to_rotation, State12};
use crate::error::SimError;
use crate::hop_cycle::{StanceModel, Surface, DEFAULT_FOOT_LENGTH};
use crate::params::RobotParams;
use crate::trajectory::{ExtraConstraint, TrajectoryType, DEFAULT_N_STAR};

fn default_true() -> bool {
    true
}
fn default_dt_control() -> f64 {
    1e-3
}
fn default_dt_physics() -> f64 {
    1e-4
}
fn default_foot() -> f64 {
    DEFAULT_FOOT_LENGTH
}
fn default_n_star() -> usize {
    DEFAULT_N_STAR
}
fn default_td_window() -> f64 {
    0.03
}

/// Liftoff state of the first hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub position: [f64; 3],
    pub euler_deg: [f64; 3],
    /// Speed along the body z-axis (m/s).
    pub speed: f64,
}

impl InitialState {
    pub fn state(&self) -> Result<State12, SimError> {
        let euler = Vector3::from(self.euler_deg).map(f64::to_radians);
        let r = euler_to_rotation(&euler).map_err(|e| SimError::Scenario(format!("initial attitude: {e}")))?;
        Ok(State12::new(Vector3::from(self.position), self.speed * r.column(2), euler, Vector3::zeros()))
    }
}

/// One entry of the hop plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopPlan {
    #[serde(rename = "type")]
    pub ty: TrajectoryType,
    /// Index into the scenario's surfaces.
    pub surface: usize,
    pub td_euler_deg: [f64; 3],
    pub v_td: f64,
    #[serde(default)]
    pub td_position: [Option<f64>; 3],
    #[serde(default = "default_true")]
    pub relative: bool,
    pub t_m: f64,
    pub delta_t: f64,
    #[serde(default)]
    pub u1_td: Option<f64>,
    #[serde(default)]
    pub lo_u1: Option<f64>,
    /// Subtract drag from the liftoff acceleration too.
    #[serde(default)]
    pub lo_drag: bool,
    #[serde(default = "default_n_star")]
    pub n_star: usize,
    #[serde(default)]
    pub extras: Vec<ExtraConstraint>,
    /// Per-hop override of the scenario's drag compensation.
    #[serde(default)]
    pub drag_comp: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSettings {
    pub enabled: bool,
    pub mu: f64,
}

impl Default for GammaSettings {
    fn default() -> Self {
        Self { enabled: true, mu: 0.1 }
    }
}

/// Gaussian perturbation of the first liftoff state, drawn from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub position_std: f64,
    pub velocity_std: f64,
    pub angle_std_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Parameter file, relative to the scenario file. Nominal when absent.
    #[serde(default)]
    pub params: Option<PathBuf>,
    #[serde(default)]
    pub gains: Gains,
    pub surfaces: Vec<Surface>,
    pub initial: InitialState,
    pub hops: Vec<HopPlan>,
    #[serde(default)]
    pub cycle_from: Option<usize>,
    pub total_time: f64,
    #[serde(default = "default_dt_control")]
    pub dt_control: f64,
    #[serde(default = "default_dt_physics")]
    pub dt_physics: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stance: StanceModel,
    #[serde(default = "default_foot")]
    pub foot_length: f64,
    #[serde(default)]
    pub gamma: GammaSettings,
    /// Liftoff speed after each stance; energy retention applies when absent.
    #[serde(default)]
    pub lo_speed: Option<f64>,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default = "default_true")]
    pub drag_comp: bool,
    /// Touchdown is forced this long after `t_m` if no contact occurred (s).
    #[serde(default = "default_td_window")]
    pub td_window: f64,
    /// Bound for `V_LO − V_TD`.
    #[serde(default)]
    pub hybrid_bound: f64,
}

impl Scenario {
    pub fn from_json_str(s: &str) -> Result<Self, SimError> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    /// Reads a scenario and makes its parameter path absolute.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Scenario(format!("cannot read {}: {e}", path.display())))?;
        let mut sc = Self::from_json_str(&text)?;
        if let Some(p) = &sc.params {
            if p.is_relative() {
                sc.params = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        Ok(sc)
    }

    pub fn load_params(&self) -> Result<RobotParams, SimError> {
        match &self.params {
            Some(p) => Ok(RobotParams::from_file(p)?),
            None => Ok(RobotParams::nominal()),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return bad(format!("total_time must be > 0, got {}", self.total_time));
        }
        if !(self.dt_physics > 0.0 && self.dt_control > 0.0 && self.dt_physics <= self.dt_control) {
            return bad(format!(
                "need 0 < dt_physics <= dt_control, got {} and {}",
                self.dt_physics, self.dt_control
            ));
        }
        if self.hops.is_empty() {
            return bad("hop plan is empty".into());
        }
        if let Some(c) = self.cycle_from {
            if c >= self.hops.len() {
                return bad(format!("cycle_from {c} is past the end of the plan"));
            }
        }
        for s in &self.surfaces {
            s.validate()?;
        }
        self.stance.validate()?;
        self.gains.validate()?;
        if !(self.foot_length >= 0.0 && self.foot_length.is_finite()) {
            return bad("foot_length must be >= 0".into());
        }
        if !(self.td_window >= 0.0) {
            return bad("td_window must be >= 0".into());
        }
        if !(self.initial.speed >= 0.0) {
            return bad("initial speed must be >= 0".into());
        }
        for (i, h) in self.hops.iter().enumerate() {
            let surf = match self.surfaces.get(h.surface) {
                Some(s) => s,
                None => return bad(format!("hop {i}: surface {} does not exist", h.surface)),
            };
            if !(h.t_m > 0.0 && h.delta_t > 0.0 && h.delta_t < h.t_m) {
                return bad(format!("hop {i}: need 0 < delta_t < t_m"));
            }
            if !(h.v_td > 0.0) {
                return bad(format!("hop {i}: v_td must be > 0"));
            }
            if surf.normal_axis().is_none() {
                return bad(format!("hop {i}: surface normal must be aligned with a world axis"));
            }
        }
        Ok(())
    }

    /// Plan entry used for hop `index`.
    pub fn plan_for(&self, index: usize) -> &HopPlan {
        let n = self.hops.len();
        if index < n {
            return &self.hops[index];
        }
        let start = self.cycle_from.unwrap_or(n - 1);
        let period = n - start;
        &self.hops[start + (index - n) % period]
    }

    /// First liftoff state including the seeded perturbation.
    pub fn initial_state(&self, seed: u64) -> Result<State12, SimError> {
        let mut s = self.initial.state()?;
        let p = self.perturbation;
        if p.position_std == 0.0 && p.velocity_std == 0.0 && p.angle_std_deg == 0.0 {
            return Ok(s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |std: f64| -> Result<f64, SimError> {
            let n = Normal::new(0.0, std).map_err(|e| SimError::Scenario(format!("perturbation: {e}")))?;
            Ok(n.sample(&mut rng))
        };
        for i in 0..3 {
            s.position[i] += draw(p.position_std)?;
        }
        for i in 0..3 {
            s.velocity[i] += draw(p.velocity_std)?;
        }
        for i in 0..3 {
            s.euler[i] += draw(p.angle_std_deg)?.to_radians();
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "surfaces": [{"kind": "ground", "z0": 0.0}],
        "initial": {"position": [0, 0, 0.2], "euler_deg": [0, 0, 0], "speed": 3.0},
        "hops": [
            {"type": "T1", "surface": 0, "td_euler_deg": [0, 0, 0], "v_td": 3.0, "t_m": 0.5, "delta_t": 0.05},
            {"type": "T1", "surface": 0, "td_euler_deg": [0, 10, 0], "v_td": 3.0, "t_m": 0.5, "delta_t": 0.05}
        ],
        "total_time": 1.0
    }"#;

    #[test]
    fn defaults_fill_in() {
        let sc = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(sc.dt_control, 1e-3);
        assert_eq!(sc.dt_physics, 1e-4);
        assert_eq!(sc.gains, Gains::default());
        assert!(sc.drag_comp && sc.gamma.enabled);
        assert_eq!(sc.hops[0].n_star, 2);
        assert!(sc.hops[0].relative);
    }

    #[test]
    fn plan_cycles() {
        let mut sc = Scenario::from_json_str(MINIMAL).unwrap();
        let td = |sc: &Scenario, i| sc.plan_for(i).td_euler_deg[1];
        assert_eq!([td(&sc, 0), td(&sc, 1), td(&sc, 2), td(&sc, 3)], [0.0, 10.0, 10.0, 10.0]);
        sc.cycle_from = Some(0);
        assert_eq!([td(&sc, 2), td(&sc, 3), td(&sc, 4)], [0.0, 10.0, 0.0]);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut sc = Scenario::from_json_str(MINIMAL).unwrap();
        sc.dt_physics = 1e-2;
        assert!(sc.validate().is_err());
        let mut sc = Scenario::from_json_str(MINIMAL).unwrap();
        sc.total_time = 0.0;
        assert!(sc.validate().is_err());
        let mut sc = Scenario::from_json_str(MINIMAL).unwrap();
        sc.hops[1].surface = 3;
        assert!(sc.validate().is_err());
        assert!(Scenario::from_json_str("{").is_err());
    }

    #[test]
    fn perturbation_is_seeded() {
        let mut sc = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(sc.initial_state(1).unwrap(), sc.initial.state().unwrap());
        sc.perturbation.position_std = 0.01;
        let a = sc.initial_state(7).unwrap();
        assert_eq!(a, sc.initial_state(7).unwrap());
        assert_ne!(a, sc.initial_state(8).unwrap());
    }
}
