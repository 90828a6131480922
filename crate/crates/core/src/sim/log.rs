//! Simulation logs and their CSV form.
//!
//! The CSV has one row per control tick and 32 columns:
//!
//! | columns | content |
//! |---|---|
//! | 1 | `t` |
//! | 2–13 | desired `x y z vx vy vz phi theta psi p q r` |
//! | 14 | desired `U1` |
//! | 15–26 | actual state, same order |
//! | 27–30 | applied `U1 U2 U3 U4` |
//! | 31 | phase (`0` aerial, `1` stance) |
//! | 32 | `V` |
//!
//! Numbers are written in the shortest representation that parses back to
//! the same `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::Saturation;
use crate::dynamics::{ControlInput, State12};
use crate::error::SimError;
use crate::hop_cycle::{HopPhase, HybridReport};
use crate::trajectory::{Keyframe, TrajectoryType};

pub const CSV_COLUMNS: usize = 32;

const STATE_NAMES: [&str; 12] = ["x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "p", "q", "r"];

/// Header row of the log CSV.
pub fn csv_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(STATE_NAMES.iter().map(|n| format!("{n}_d")));
    h.push("U1_d".into());
    h.extend(STATE_NAMES.iter().map(|n| n.to_string()));
    h.extend(["U1", "U2", "U3", "U4", "phase", "V"].map(String::from));
    h
}

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub hop: usize,
    pub phase: HopPhase,
    pub desired: State12,
    pub u1_d: f64,
    pub actual: State12,
    pub input: ControlInput,
    pub v: f64,
    pub v_dot_design: f64,
    pub saturation: Saturation,
}

/// How a hop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TouchdownKind {
    /// Foot contact within the window around `t_m`.
    Detected,
    /// Foot contact well before `t_m`.
    Early,
    /// No contact by the end of the window; touchdown taken at the window end.
    Forced,
    /// Simulation time ran out in the air.
    Unfinished,
}

/// Summary of one hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub index: usize,
    pub ty: TrajectoryType,
    pub drag_comp: bool,
    pub t_lo: f64,
    pub t_m: f64,
    pub keyframes: [Keyframe; 3],
    /// Desired touchdown Euler angles after the γ correction (rad).
    pub td_euler: [f64; 3],
    pub touchdown: TouchdownKind,
    pub t_td: Option<f64>,
    pub td_state: Option<State12>,
    /// Distance between the touchdown position and the keyframe position over
    /// the axes the keyframe fixes (m).
    pub td_position_error: Option<f64>,
    /// Angle between the touchdown attitude and the desired touchdown frame (deg).
    pub td_attitude_error_deg: Option<f64>,
    pub v_td: Option<f64>,
    pub lo_next: Option<State12>,
    /// `V_LO − V_TD` across the stance that ended this hop.
    pub hybrid: Option<HybridReport>,
    /// `(γ_φ, γ_θ)` after this hop's stance.
    pub gamma: (f64, f64),
    /// Nominal desired touchdown `(φ, θ)` before the γ correction (rad).
    pub beta_td: (f64, f64),
    /// Liftoff `(φ, θ)` after this hop's stance (rad).
    pub beta_lo: Option<(f64, f64)>,
    pub saturated_ticks: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub scenario: String,
    pub drag_comp: bool,
    pub seed: u64,
    pub ticks: Vec<TickRecord>,
    pub hops: Vec<HopRecord>,
    pub warnings: Vec<String>,
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut wr = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| SimError::Csv { line: 0, message: e.to_string() };
        wr.write_record(csv_header()).map_err(csv_err)?;
        for tick in &self.ticks {
            wr.write_record(row_fields(tick).iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn emit_csv(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Rebuilds the ticks of a log CSV. Hop indices are recovered from the
    /// stance-to-aerial transitions; per-hop records and the fields the CSV
    /// does not carry are left empty.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, SimError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rd.headers().map_err(|e| SimError::Csv { line: 1, message: e.to_string() })?.clone();
        if header.len() != CSV_COLUMNS || header.iter().zip(csv_header()).any(|(a, b)| a != b) {
            return Err(SimError::Csv { line: 1, message: "unexpected header".into() });
        }
        let mut log = TrajectoryLog::default();
        let mut hop = 0;
        let mut prev_phase = HopPhase::Aerial;
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| SimError::Csv { line, message: e.to_string() })?;
            if rec.len() != CSV_COLUMNS {
                return Err(SimError::Csv { line, message: format!("expected {CSV_COLUMNS} fields, got {}", rec.len()) });
            }
            let mut f = [0.0; CSV_COLUMNS];
            for (j, field) in rec.iter().enumerate() {
                f[j] = field
                    .trim()
                    .parse()
                    .map_err(|_| SimError::Csv { line, message: format!("column {}: cannot parse {field:?}", j + 1) })?;
            }
            let phase = match f[30] {
                c if c == 0.0 => HopPhase::Aerial,
                c if c == 1.0 => HopPhase::Stance,
                c => return Err(SimError::Csv { line, message: format!("bad phase code {c}") }),
            };
            if prev_phase == HopPhase::Stance && phase == HopPhase::Aerial {
                hop += 1;
            }
            prev_phase = phase;
            let state = |o: usize| State12::from_array(f[o..o + 12].try_into().expect("12 fields"));
            log.ticks.push(TickRecord {
                t: f[0],
                hop,
                phase,
                desired: state(1),
                u1_d: f[13],
                actual: state(14),
                input: ControlInput::new(f[26], f[27], f[28], f[29]),
                v: f[31],
                v_dot_design: f64::NAN,
                saturation: Saturation::default(),
            });
        }
        Ok(log)
    }

    pub fn from_csv_file(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn row_fields(t: &TickRecord) -> [f64; CSV_COLUMNS] {
    let mut f = [0.0; CSV_COLUMNS];
    f[0] = t.t;
    f[1..13].copy_from_slice(&t.desired.to_array());
    f[13] = t.u1_d;
    f[14..26].copy_from_slice(&t.actual.to_array());
    f[26..30].copy_from_slice(t.input.to_vector().as_slice());
    f[30] = t.phase.code() as f64;
    f[31] = t.v;
    f
}
