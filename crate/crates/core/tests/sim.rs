use std::path::PathBuf;
use std::process::Command;

use hoptraj::hop_cycle::HopPhase;
use hoptraj::sim::{
    compare_drag_runs, rmse, run_scenario, run_scenario_partial, write_run, RunOptions, Scenario, TouchdownKind,
    TrajectoryLog,
};
use hoptraj::{RobotParams, SimError};

const VERTICAL: &str = r#"{
    "name": "vertical",
    "surfaces": [{"kind": "ground", "z0": 0.0}],
    "initial": {"position": [0, 0, 0.2], "euler_deg": [0, 0, 0], "speed": 4.0},
    "hops": [{"type": "T1", "surface": 0, "td_euler_deg": [0, 0, 0], "v_td": 4.0, "t_m": 1.5, "delta_t": 0.05}],
    "lo_speed": 4.0,
    "total_time": 3.3
}"#;

/// Two short pitched hops on the ground, touchdown states fixed.
const PITCHED: &str = r#"{
    "name": "pitched",
    "surfaces": [{"kind": "ground", "z0": 0.0}],
    "initial": {"position": [0.1, 0, 0.17320508075688776], "euler_deg": [0, 30, 0], "speed": 5.0},
    "hops": [
        {"type": "T3", "surface": 0, "td_euler_deg": [0, -30, 0], "v_td": 5.0, "td_position": [2.0, 0.0, null], "t_m": 1.75, "delta_t": 0.05},
        {"type": "T3", "surface": 0, "td_euler_deg": [0, 30, 0], "v_td": 5.0, "td_position": [-2.0, 0.0, null], "t_m": 1.75, "delta_t": 0.05}
    ],
    "cycle_from": 0,
    "lo_speed": 5.0,
    "total_time": 3.7
}"#;

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn csv_bytes(log: &TrajectoryLog) -> Vec<u8> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn runs_are_deterministic() {
    let sc = Scenario::from_json_str(PITCHED).unwrap();
    let p = RobotParams::nominal();
    let a = run_scenario(&sc, &p, &RunOptions::default()).unwrap();
    let b = run_scenario(&sc, &p, &RunOptions::default()).unwrap();
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    assert_eq!(a.hops, b.hops);
    // the paired runner gives the same logs as separate runs
    let (on, off) = compare_drag_runs(&sc, &p, &RunOptions::default(), None).unwrap();
    assert_eq!(csv_bytes(&on.log), csv_bytes(&a));
    let off_alone = run_scenario(&sc, &p, &RunOptions { drag_comp: Some(false), ..Default::default() }).unwrap();
    assert_eq!(csv_bytes(&off.log), csv_bytes(&off_alone));
}

#[test]
fn seeded_perturbation_is_reproducible() {
    let mut sc = Scenario::from_json_str(VERTICAL).unwrap();
    sc.total_time = 0.2;
    sc.perturbation.position_std = 0.01;
    let p = RobotParams::nominal();
    let run = |seed| run_scenario(&sc, &p, &RunOptions { seed: Some(seed), ..Default::default() }).unwrap();
    let (a, b, c) = (run(7), run(7), run(8));
    assert_eq!(a.ticks[0].actual, b.ticks[0].actual);
    assert_ne!(a.ticks[0].actual, c.ticks[0].actual);
    assert_eq!(a.seed, 7);
}

#[test]
fn phases_alternate_with_fixed_stance_length() {
    let sc = Scenario::from_json_str(PITCHED).unwrap();
    let log = run_scenario(&sc, &RobotParams::nominal(), &RunOptions::default()).unwrap();
    assert_eq!(log.hops.len(), 3);
    assert!(log.hops[..2].iter().all(|h| h.touchdown == TouchdownKind::Detected));
    assert_eq!(log.hops[2].touchdown, TouchdownKind::Unfinished);
    let mut runs: Vec<(HopPhase, usize)> = Vec::new();
    for t in &log.ticks {
        match runs.last_mut() {
            Some((ph, n)) if *ph == t.phase => *n += 1,
            _ => runs.push((t.phase, 1)),
        }
    }
    let phases: Vec<HopPhase> = runs.iter().map(|r| r.0).collect();
    use HopPhase::*;
    assert_eq!(phases, [Aerial, Stance, Aerial, Stance, Aerial]);
    let stance_ticks = (sc.stance.t_s / sc.dt_control).round() as usize;
    assert!(runs.iter().filter(|r| r.0 == Stance).all(|r| r.1 == stance_ticks));
    // time never runs backwards
    assert!(log.ticks.windows(2).all(|w| w[1].t > w[0].t));
    // touchdown lands close to the planned time and state
    for h in &log.hops[..2] {
        assert!((h.t_td.unwrap() - h.t_lo - h.t_m).abs() < 0.01);
        assert!(h.td_position_error.unwrap() < 0.01);
        assert!(h.td_attitude_error_deg.unwrap() < 0.5);
    }
}

#[test]
fn vertical_hop_keeps_lyapunov_jump_small() {
    let sc = Scenario::from_json_str(VERTICAL).unwrap();
    let log = run_scenario(&sc, &RobotParams::nominal(), &RunOptions::default()).unwrap();
    assert!(log.hops.len() >= 2);
    let h = log.hops[0].hybrid.expect("second hop started");
    assert!(h.delta_v <= 1e-6, "{h:?}");
    assert!(h.ok);
    for t in &log.ticks {
        assert!(t.actual.position[0].abs() < 1e-9 && t.actual.position[1].abs() < 1e-9);
        assert!(t.v_dot_design <= 0.0);
    }
}

#[test]
fn drag_free_plant_makes_compensation_irrelevant() {
    let mut p = RobotParams::nominal();
    p.drag_translational = [[0.0; 3]; 3];
    p.drag_rotational = [[0.0; 3]; 3];
    let sc = Scenario::from_json_str(PITCHED).unwrap();
    let (on, off) = compare_drag_runs(&sc, &p, &RunOptions::default(), None).unwrap();
    assert_eq!(on.log.ticks.len(), off.log.ticks.len());
    for (a, b) in on.log.ticks.iter().zip(&off.log.ticks) {
        let (x, y) = (a.actual.to_array(), b.actual.to_array());
        for i in 0..12 {
            assert!((x[i] - y[i]).abs() <= 1e-12, "t = {}: {} vs {}", a.t, x[i], y[i]);
        }
    }
}

#[test]
fn drag_compensation_lowers_tracking_error() {
    let sc = Scenario::from_json_str(PITCHED).unwrap();
    let (on, off) = compare_drag_runs(&sc, &RobotParams::nominal(), &RunOptions::default(), None).unwrap();
    let (on, off) = (rmse(&on.log).unwrap(), rmse(&off.log).unwrap());
    assert!(on.rmse_pos < off.rmse_pos, "{} vs {}", on.rmse_pos, off.rmse_pos);
}

#[test]
fn short_run_yields_one_unfinished_hop() {
    let mut sc = Scenario::from_json_str(VERTICAL).unwrap();
    sc.total_time = 0.0105;
    let log = run_scenario(&sc, &RobotParams::nominal(), &RunOptions::default()).unwrap();
    assert_eq!(log.ticks.len(), 11);
    assert_eq!(log.hops.len(), 1);
    assert_eq!(log.hops[0].touchdown, TouchdownKind::Unfinished);
    assert!(log.hops[0].hybrid.is_none());
}

#[test]
fn failures_keep_the_partial_log() {
    // the plan asks for a near-ballistic hop whose apex needs no thrust
    let mut sc = Scenario::from_json_str(VERTICAL).unwrap();
    sc.hops[0].t_m = 0.8;
    let (out, err) = run_scenario_partial(&sc, &RobotParams::nominal(), &RunOptions::default(), None);
    match err {
        Some(SimError::Singularity { hop, t, .. }) => {
            assert_eq!(hop, 0);
            assert!(t > 0.0 && t < 0.8);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(out.log.hops.len(), 1);
    assert_eq!(out.trajectories.len(), 1);
    assert!(!out.log.ticks.is_empty());
}

#[test]
fn written_log_reads_back_to_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let sc = Scenario::from_json_str(PITCHED).unwrap();
    let (out, err) = run_scenario_partial(&sc, &RobotParams::nominal(), &RunOptions::default(), None);
    assert!(err.is_none());
    let report = write_run(dir.path(), &out.log, &out.trajectories).unwrap();
    for f in ["log.csv", "plot_zx.csv", "plot_yx.csv", "plot_states.csv", "hops.json", "trajectories/hop_000.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let back = TrajectoryLog::from_csv_file(dir.path().join("log.csv")).unwrap();
    let again = rmse(&back).unwrap();
    assert_eq!(again.rmse_pos.to_bits(), report.rmse_pos.to_bits());
    assert_eq!(again.per_hop.len(), report.per_hop.len());
}

#[test]
fn bundled_scenarios_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let sc = Scenario::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            sc.load_params().unwrap();
            n += 1;
        }
    }
    assert!(n >= 7);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hoptraj"))
}

#[test]
fn cli_run_writes_outputs_and_respects_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    let mut sc: serde_json::Value = serde_json::from_str(VERTICAL).unwrap();
    sc["total_time"] = 0.3.into();
    std::fs::write(&scenario, sc.to_string()).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("out{threads}"));
        let st = cli()
            .args(["run", scenario.to_str().unwrap(), "--drag-comp", "both", "--out", out.to_str().unwrap()])
            .env("HOPTRAJ_THREADS", threads)
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        assert!(out.join("summary.json").is_file());
        outputs.push((
            std::fs::read(out.join("comp-on/log.csv")).unwrap(),
            std::fs::read(out.join("comp-off/log.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);

    let st = cli().args(["rmse", dir.path().join("out1/comp-on/log.csv").to_str().unwrap()]).output().unwrap();
    assert!(st.status.success());
    let v: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert!(v["rmse_pos"].as_f64().unwrap() < 0.01);
}

#[test]
fn cli_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let st = cli().args(["run", dir.path().join("missing.json").to_str().unwrap()]).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("missing.json"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,x\n1,2\n").unwrap();
    let st = cli().args(["rmse", bad.to_str().unwrap()]).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("header"));

    let st = cli().args(["run", "x.json", "--dt-control", "-1"]).output().unwrap();
    assert!(!st.status.success());

    // a failing run still writes its partial output
    let scenario = dir.path().join("fail.json");
    let mut sc: serde_json::Value = serde_json::from_str(VERTICAL).unwrap();
    sc["hops"][0]["t_m"] = 0.8.into();
    std::fs::write(&scenario, sc.to_string()).unwrap();
    let out = dir.path().join("fail_out");
    let st = cli()
        .args(["run", scenario.to_str().unwrap(), "--drag-comp", "off", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("hop 0"));
    assert!(out.join("comp-off/log.csv").is_file());
}
