//! Tracking metrics and output files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::log::TrajectoryLog;
use crate::error::SimError;
use crate::hop_cycle::HopPhase;
use crate::trajectory::PolynomialTrajectory;

/// RMSE of one hop's aerial ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopRmse {
    pub hop: usize,
    pub samples: usize,
    pub rmse_pos: f64,
    pub rmse_vel: f64,
}

/// Root-mean-square tracking errors over aerial ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub drag_comp: bool,
    pub samples: usize,
    /// `√(mean ‖r_d − r‖²)` (m).
    pub rmse_pos: f64,
    /// `√(mean ‖v_d − v‖²)` (m/s).
    pub rmse_vel: f64,
    pub rmse_pos_axis: [f64; 3],
    pub rmse_vel_axis: [f64; 3],
    pub per_hop: Vec<HopRmse>,
}

/// Position and velocity RMSE over the aerial ticks of `log`.
pub fn rmse(log: &TrajectoryLog) -> Result<RmseReport, SimError> {
    let mut pos_axis = [0.0; 3];
    let mut vel_axis = [0.0; 3];
    let mut n = 0usize;
    let mut per_hop: Vec<(usize, usize, f64, f64)> = Vec::new();
    for tick in log.ticks.iter().filter(|t| t.phase == HopPhase::Aerial) {
        let dp = tick.desired.position - tick.actual.position;
        let dv = tick.desired.velocity - tick.actual.velocity;
        for i in 0..3 {
            pos_axis[i] += dp[i] * dp[i];
            vel_axis[i] += dv[i] * dv[i];
        }
        n += 1;
        match per_hop.last_mut() {
            Some(h) if h.0 == tick.hop => {
                h.1 += 1;
                h.2 += dp.norm_squared();
                h.3 += dv.norm_squared();
            }
            _ => per_hop.push((tick.hop, 1, dp.norm_squared(), dv.norm_squared())),
        }
    }
    if n == 0 {
        return Err(SimError::EmptyLog);
    }
    let nf = n as f64;
    Ok(RmseReport {
        drag_comp: log.drag_comp,
        samples: n,
        rmse_pos: (pos_axis.iter().sum::<f64>() / nf).sqrt(),
        rmse_vel: (vel_axis.iter().sum::<f64>() / nf).sqrt(),
        rmse_pos_axis: pos_axis.map(|s| (s / nf).sqrt()),
        rmse_vel_axis: vel_axis.map(|s| (s / nf).sqrt()),
        per_hop: per_hop
            .into_iter()
            .map(|(hop, k, p, v)| HopRmse { hop, samples: k, rmse_pos: (p / k as f64).sqrt(), rmse_vel: (v / k as f64).sqrt() })
            .collect(),
    })
}

/// Writes the log CSV, plot data, per-hop records and trajectory exports into `dir`.
pub fn write_run(dir: &Path, log: &TrajectoryLog, trajectories: &[PolynomialTrajectory]) -> Result<RmseReport, SimError> {
    std::fs::create_dir_all(dir)?;
    log.emit_csv(dir.join("log.csv"))?;
    write_plot_data(dir, log)?;
    std::fs::write(dir.join("hops.json"), serde_json::to_string_pretty(&log.hops)?)?;
    let traj_dir = dir.join("trajectories");
    std::fs::create_dir_all(&traj_dir)?;
    for (i, t) in trajectories.iter().enumerate() {
        std::fs::write(traj_dir.join(format!("hop_{i:03}.json")), t.to_json())?;
    }
    rmse(log)
}

/// The three plot panels: the z–x and y–x planes and states over time.
pub fn write_plot_data(dir: &Path, log: &TrajectoryLog) -> Result<(), SimError> {
    let mut zx = csv::Writer::from_path(dir.join("plot_zx.csv")).map_err(csv_err)?;
    let mut yx = csv::Writer::from_path(dir.join("plot_yx.csv")).map_err(csv_err)?;
    let mut st = csv::Writer::from_path(dir.join("plot_states.csv")).map_err(csv_err)?;
    zx.write_record(["t", "phase", "x_d", "z_d", "x", "z"]).map_err(csv_err)?;
    yx.write_record(["t", "phase", "x_d", "y_d", "x", "y"]).map_err(csv_err)?;
    st.write_record([
        "t", "phase", "x", "y", "z", "vx", "vy", "vz", "phi_deg", "theta_deg", "psi_deg", "U1", "U2", "U3", "U4",
    ])
    .map_err(csv_err)?;
    for t in &log.ticks {
        let (d, a) = (&t.desired, &t.actual);
        let ph = t.phase.code() as f64;
        let row = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        zx.write_record(row(&[t.t, ph, d.position[0], d.position[2], a.position[0], a.position[2]])).map_err(csv_err)?;
        yx.write_record(row(&[t.t, ph, d.position[0], d.position[1], a.position[0], a.position[1]])).map_err(csv_err)?;
        let e = a.euler.map(f64::to_degrees);
        let u = &t.input;
        st.write_record(row(&[
            t.t, ph, a.position[0], a.position[1], a.position[2], a.velocity[0], a.velocity[1], a.velocity[2], e[0],
            e[1], e[2], u.u1, u.u2, u.u3, u.u4,
        ]))
        .map_err(csv_err)?;
    }
    zx.flush()?;
    yx.flush()?;
    st.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Csv { line: 0, message: e.to_string() }
}
