use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use hoptraj::bench::bench_hop_generation;
use hoptraj::sim::{rmse, run_parallel, run_scenario_partial, write_run, RunOptions, Scenario, TrajectoryLog};
use hoptraj::SimError;
use hoptraj::trajectory::SystemCache;
use hoptraj::RobotParams;

/// Keyframe trajectory generation and tracking simulation for hopping robots.
///
/// Worker threads are capped by the HOPTRAJ_THREADS environment variable.
#[derive(Parser)]
#[command(name = "hoptraj", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DragMode {
    On,
    Off,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write logs, plot data and a summary.
    Run {
        scenario: PathBuf,
        /// Drag compensation; the scenario's own setting when omitted.
        #[arg(long, value_enum)]
        drag_comp: Option<DragMode>,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Control period in seconds.
        #[arg(long)]
        dt_control: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Position and velocity RMSE of a log CSV.
    Rmse { log: PathBuf },
    /// Latency of hop trajectory generation per trajectory type.
    Bench {
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        /// Parameter file (default: the nominal set).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Reuse factorizations across calls.
        #[arg(long)]
        cached: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, drag_comp, out, dt_control, seed } => {
            cmd_run(&scenario, drag_comp, out, RunOptions { drag_comp: None, dt_control, seed })
        }
        Command::Rmse { log } => {
            let log = TrajectoryLog::from_csv_file(&log).with_context(|| format!("reading {}", log.display()))?;
            println!("{}", serde_json::to_string_pretty(&rmse(&log)?)?);
            Ok(())
        }
        Command::Bench { iters, params, cached } => {
            let params = match params {
                Some(p) => RobotParams::from_file(p)?,
                None => RobotParams::nominal(),
            };
            for r in bench_hop_generation(&params, iters, cached)? {
                println!(
                    "{} cached={} iters={} median_ns={} p99_ns={}",
                    r.ty, r.cached, r.iterations, r.median_ns, r.p99_ns
                );
            }
            Ok(())
        }
    }
}

fn cmd_run(path: &Path, mode: Option<DragMode>, out: Option<PathBuf>, opts: RunOptions) -> Result<()> {
    if let Some(dt) = opts.dt_control {
        if !(dt > 0.0 && dt.is_finite()) {
            bail!("--dt-control must be a positive number of seconds");
        }
    }
    let sc = Scenario::from_file(path).with_context(|| format!("loading scenario {}", path.display()))?;
    let params = sc.load_params()?;
    let out = out.unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
    let cache = SystemCache::new();

    let modes: Vec<bool> = match mode {
        Some(DragMode::Both) => vec![true, false],
        Some(DragMode::On) => vec![true],
        Some(DragMode::Off) => vec![false],
        None => vec![sc.drag_comp],
    };
    let jobs: Vec<_> = modes
        .iter()
        .map(|&drag| {
            let (sc, params, cache) = (&sc, &params, &cache);
            move || run_scenario_partial(sc, params, &RunOptions { drag_comp: Some(drag), ..opts }, Some(cache))
        })
        .collect();
    let runs = run_parallel(jobs);

    let mut summary = Vec::new();
    let mut failure = None;
    for (run, err) in &runs {
        let label = if run.log.drag_comp { "comp-on" } else { "comp-off" };
        let dir = out.join(label);
        // partial output is still written so a failed run can be inspected
        let report = match write_run(&dir, &run.log, &run.trajectories) {
            Ok(r) => Some(r),
            Err(SimError::EmptyLog) => None,
            Err(e) => return Err(e).with_context(|| format!("writing {}", dir.display())),
        };
        for w in &run.log.warnings {
            eprintln!("warning ({label}): {w}");
        }
        let hops: Vec<_> = run
            .log
            .hops
            .iter()
            .map(|h| {
                json!({
                    "hop": h.index,
                    "type": h.ty,
                    "touchdown": h.touchdown,
                    "t_lo": h.t_lo,
                    "t_td": h.t_td,
                    "td_position_error": h.td_position_error,
                    "td_attitude_error_deg": h.td_attitude_error_deg,
                    "delta_v": h.hybrid.map(|r| r.delta_v),
                    "hybrid_ok": h.hybrid.map(|r| r.ok),
                    "gamma": h.gamma,
                })
            })
            .collect();
        match &report {
            Some(r) => println!(
                "{label}: hops={} rmse_pos={:.4} m rmse_vel={:.4} m/s -> {}",
                run.log.hops.len(),
                r.rmse_pos,
                r.rmse_vel,
                dir.display()
            ),
            None => println!("{label}: no aerial ticks -> {}", dir.display()),
        }
        let error = err.as_ref().map(chain);
        if let (Some(e), None) = (&error, &failure) {
            failure = Some(format!("{label} run: {e}"));
        }
        summary.push(json!({ "run": label, "rmse": report, "hops": hops, "warnings": run.log.warnings, "error": error }));
    }
    std::fs::create_dir_all(&out)?;
    let summary = json!({ "scenario": sc.name, "seed": opts.seed.unwrap_or(sc.seed), "runs": summary });
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    match failure {
        Some(f) => bail!("{f} (partial output in {})", out.display()),
        None => Ok(()),
    }
}

fn chain(e: &SimError) -> String {
    let mut s = e.to_string();
    let mut cur = std::error::Error::source(e);
    while let Some(c) = cur {
        s.push_str(": ");
        s.push_str(&c.to_string());
        cur = c.source();
    }
    s
}
