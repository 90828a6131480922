//! Closed-loop multi-hop simulation.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::log::{HopRecord, TickRecord, TouchdownKind, TrajectoryLog};
use super::report::{rmse, RmseReport};
use super::scenario::{HopPlan, Scenario};
use crate::control::{compute_errors, control, lyapunov_rate, Saturation};
use crate::dynamics::{integrate_step, ControlInput, State12};
use crate::error::{HopError, SimError};
use crate::flatness::{flat_to_state, FlatState, FlatnessOptions};
use crate::hop_cycle::{detect_touchdown, hybrid_check, stance_map, GammaAdapter, HopPhase, Surface, TiltAxis};
use crate::params::RobotParams;
use crate::trajectory::{
    make_hop_trajectory_cached, td_rotation, HopRequest, PolynomialTrajectory, SystemCache, TouchdownSpec,
};

/// Environment variable that caps the number of worker threads.
pub const THREADS_ENV: &str = "HOPTRAJ_THREADS";

/// Worker threads to use: `HOPTRAJ_THREADS` if set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `jobs` on at most [`worker_threads`] threads, preserving order.
pub fn run_parallel<T, F>(jobs: Vec<F>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let workers = worker_threads().min(jobs.len()).max(1);
    if workers == 1 {
        return jobs.into_iter().map(|j| j()).collect();
    }
    let mut slots: Vec<Option<T>> = Vec::new();
    slots.resize_with(jobs.len(), || None);
    let queue = std::sync::Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>().into_iter());
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let next = queue.lock().unwrap_or_else(|e| e.into_inner()).next();
                let Some((i, job)) = next else { break };
                let out = job();
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every job ran")).collect()
}

/// Command-line overrides of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    pub drag_comp: Option<bool>,
    pub dt_control: Option<f64>,
    pub seed: Option<u64>,
}

/// Everything a rollout produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub trajectories: Vec<PolynomialTrajectory>,
}

fn singular(hop: usize, t: f64, message: impl std::fmt::Display) -> SimError {
    SimError::Singularity { hop, t, message: message.to_string() }
}

fn lerp_state(a: &State12, b: &State12, f: f64) -> State12 {
    State12::from_array(&std::array::from_fn(|i| {
        let (x, y) = (a.to_array()[i], b.to_array()[i]);
        x + (y - x) * f
    }))
}

fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Touchdown spec and request for the hop starting at `lo`.
fn hop_request(
    sc: &Scenario,
    plan: &HopPlan,
    hop: usize,
    lo: &State12,
    gamma: &GammaAdapter,
    drag_comp: bool,
) -> Result<HopRequest, SimError> {
    let nominal = Vector3::from(plan.td_euler_deg).map(f64::to_radians);
    let (phi, theta) = if sc.gamma.enabled { gamma.apply(nominal[0], nominal[1]) } else { (nominal[0], nominal[1]) };
    let euler = Vector3::new(phi, theta, nominal[2]);
    let mut td = TouchdownSpec { position: [None; 3], euler, v_td: plan.v_td, u1_td: plan.u1_td };
    let z_td = td_rotation(&td).map_err(|e| SimError::Generation { hop, source: e })?.column(2).into_owned();
    let surface = &sc.surfaces[plan.surface];
    let normal_axis = surface.normal_axis();
    for j in 0..3 {
        if Some(j) == normal_axis {
            let plane = surface.plane_coordinate().expect("axis-aligned surface");
            td.position[j] = Some(plane + sc.foot_length * z_td[j]);
        } else if let Some(v) = plan.td_position[j] {
            td.position[j] = Some(if plan.relative { lo.position[j] + v } else { v });
        }
    }
    let mut req = HopRequest::new(*lo, plan.ty, td, plan.t_m, plan.delta_t);
    req.lo_u1 = plan.lo_u1;
    req.drag_comp = drag_comp;
    req.lo_drag = plan.lo_drag;
    req.n_star = plan.n_star;
    req.extras = plan.extras.clone();
    Ok(req)
}

struct Touchdown {
    kind: TouchdownKind,
    t: f64,
    state: State12,
    surface: usize,
}

/// Runs a scenario, reusing factorizations from `cache` when given.
pub fn run_scenario_with(
    sc: &Scenario,
    params: &RobotParams,
    opts: &RunOptions,
    cache: Option<&SystemCache>,
) -> Result<RunOutput, SimError> {
    match run_scenario_partial(sc, params, opts, cache) {
        (out, None) => Ok(out),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`run_scenario_with`], but keeps whatever was simulated before a
/// failure.
pub fn run_scenario_partial(
    sc: &Scenario,
    params: &RobotParams,
    opts: &RunOptions,
    cache: Option<&SystemCache>,
) -> (RunOutput, Option<SimError>) {
    let mut out = RunOutput { log: TrajectoryLog::default(), trajectories: Vec::new() };
    let err = simulate(sc, params, opts, cache, &mut out).err();
    (out, err)
}

fn simulate(
    sc: &Scenario,
    params: &RobotParams,
    opts: &RunOptions,
    cache: Option<&SystemCache>,
    out: &mut RunOutput,
) -> Result<(), SimError> {
    let mut sc = sc.clone();
    if let Some(dt) = opts.dt_control {
        sc.dt_control = dt;
        sc.dt_physics = sc.dt_physics.min(dt);
    }
    sc.validate()?;
    params.validate()?;
    let seed = opts.seed.unwrap_or(sc.seed);
    let run_drag = opts.drag_comp.unwrap_or(sc.drag_comp);
    let dt_c = sc.dt_control;
    let substeps = ((dt_c / sc.dt_physics) - 1e-9).ceil().max(1.0) as usize;
    let h = dt_c / substeps as f64;
    let end = sc.total_time;
    let time_eps = 1e-9 * (1.0 + end);
    let stance_ticks = (sc.stance.t_s / dt_c).round() as usize;

    out.log = TrajectoryLog { scenario: sc.name.clone(), drag_comp: run_drag, seed, ..Default::default() };
    let log = &mut out.log;
    let trajectories = &mut out.trajectories;
    let mut gamma = GammaAdapter::with_mu(sc.gamma.mu);
    let mut state = sc.initial_state(seed)?;
    let mut t_lo = 0.0;
    let mut pending_v_td: Option<f64> = None;

    for hop in 0.. {
        if t_lo > end + time_eps {
            break;
        }
        let plan = sc.plan_for(hop).clone();
        let drag_comp = opts.drag_comp.or(plan.drag_comp).unwrap_or(sc.drag_comp);
        let req = hop_request(&sc, &plan, hop, &state, &gamma, drag_comp)?;
        let traj = make_hop_trajectory_cached(params, &req, cache).map_err(|e| SimError::Generation { hop, source: e })?;
        let window_end = plan.t_m + sc.td_window;
        let source = traj.extended(window_end + 4.0 * dt_c);
        let fopts = FlatnessOptions::with_drag_comp(drag_comp);
        // recorded up front so that a failing hop still shows in partial output
        let ri = log.hops.len();
        log.hops.push(HopRecord {
            index: hop,
            ty: plan.ty,
            drag_comp,
            t_lo,
            t_m: plan.t_m,
            keyframes: traj.keyframes,
            td_euler: req.td.euler.into(),
            touchdown: TouchdownKind::Unfinished,
            t_td: None,
            td_state: None,
            td_position_error: None,
            td_attitude_error_deg: None,
            v_td: None,
            lo_next: None,
            hybrid: None,
            gamma: (gamma.gamma_phi, gamma.gamma_theta),
            beta_td: (plan.td_euler_deg[0].to_radians(), plan.td_euler_deg[1].to_radians()),
            beta_lo: None,
            saturated_ticks: 0,
        });
        let kf_td = traj.keyframes[2];
        trajectories.push(traj.clone());

        let mut prev_flat: Option<FlatState> = None;
        let mut touchdown: Option<Touchdown> = None;
        let mut k = 0usize;
        while touchdown.is_none() {
            let tau = k as f64 * dt_c;
            let t = t_lo + tau;
            if t > end + time_eps {
                break;
            }
            if tau >= window_end - 1e-12 {
                touchdown = Some(Touchdown { kind: TouchdownKind::Forced, t, state, surface: plan.surface });
                break;
            }
            let desired = flat_to_state(params, &source, tau, prev_flat.as_ref(), &fopts).map_err(|e| singular(hop, t, e))?;
            let out = control(params, &sc.gains, &state, &desired);
            if k == 0 {
                if let Some(v_td) = pending_v_td.take() {
                    if ri > 0 {
                        log.hops[ri - 1].hybrid = Some(hybrid_check(v_td, out.errors.v, sc.hybrid_bound));
                    }
                }
            }
            if out.saturation.any() {
                log.hops[ri].saturated_ticks += 1;
            }
            log.ticks.push(TickRecord {
                t,
                hop,
                phase: HopPhase::Aerial,
                desired: desired.x_d,
                u1_d: desired.u1_d,
                actual: state,
                input: out.input,
                v: out.errors.v,
                v_dot_design: out.v_dot_design,
                saturation: out.saturation,
            });
            prev_flat = Some(desired);

            let mut s = state;
            for i in 0..substeps {
                let ts = t + i as f64 * h;
                let next = integrate_step(params, &s, &out.input, h).map_err(|e| singular(hop, ts + h, e))?;
                for (si, surf) in sc.surfaces.iter().enumerate() {
                    let c = detect_touchdown(Some((ts, &s)), (ts + h, &next), surf, sc.foot_length)
                        .map_err(|e| singular(hop, ts + h, e))?;
                    if c.in_contact {
                        let f = ((c.t - ts) / h).clamp(0.0, 1.0);
                        let early = c.t - t_lo < plan.t_m - sc.td_window;
                        let kind = if early { TouchdownKind::Early } else { TouchdownKind::Detected };
                        touchdown = Some(Touchdown { kind, t: c.t, state: lerp_state(&s, &next, f), surface: si });
                        break;
                    }
                }
                if touchdown.is_some() {
                    break;
                }
                s = next;
            }
            state = s;
            k += 1;
        }

        let Some(td) = touchdown else {
            break;
        };
        if td.kind == TouchdownKind::Early {
            log.warnings.push(format!(
                "hop {hop}: surface contact at {:.4} s, {:.4} s before the planned touchdown",
                td.t,
                t_lo + plan.t_m - td.t
            ));
        }
        if td.kind == TouchdownKind::Forced {
            log.warnings.push(format!("hop {hop}: no contact by {:.4} s, touchdown forced", td.t));
        }
        let tau_td = (td.t - t_lo).min(window_end);
        let desired_td = flat_to_state(params, &source, tau_td, prev_flat.as_ref(), &fopts).map_err(|e| singular(hop, td.t, e))?;
        let e_td = compute_errors(&sc.gains, &td.state, &desired_td);
        let (v_td, _) = lyapunov_rate(&sc.gains, &e_td);
        pending_v_td = Some(v_td);

        let mut err2 = 0.0;
        for j in 0..3 {
            if let Some(p) = kf_td.values[j][0] {
                err2 += (td.state.position[j] - p).powi(2);
            }
        }
        let r_td_d = td_rotation(&req.td).map_err(|e| SimError::Generation { hop, source: e })?;
        let r_td = td.state.rotation().map_err(|e| singular(hop, td.t, e))?;

        let surface: &Surface = &sc.surfaces[td.surface];
        let lo = stance_map(params, &td.state, surface, sc.foot_length, &sc.stance, sc.lo_speed).map_err(|e| match e {
            HopError::Dynamics(d) => singular(hop, td.t, d),
            other => SimError::Stance { hop, source: other },
        })?;
        if sc.gamma.enabled {
            gamma.update(log.hops[ri].beta_td.0, lo.euler[0], TiltAxis::Roll);
            gamma.update(log.hops[ri].beta_td.1, lo.euler[1], TiltAxis::Pitch);
        }
        log.hops[ri].touchdown = td.kind;
        log.hops[ri].t_td = Some(td.t);
        log.hops[ri].td_state = Some(td.state);
        log.hops[ri].td_position_error = Some(err2.sqrt());
        log.hops[ri].td_attitude_error_deg = Some(rotation_angle_deg(&r_td_d, &r_td));
        log.hops[ri].v_td = Some(v_td);
        log.hops[ri].lo_next = Some(lo);
        log.hops[ri].gamma = (gamma.gamma_phi, gamma.gamma_theta);
        log.hops[ri].beta_lo = Some((lo.euler[0], lo.euler[1]));

        for j in 0..stance_ticks {
            let t = td.t + j as f64 * dt_c;
            if t > end + time_eps {
                break;
            }
            log.ticks.push(TickRecord {
                t,
                hop,
                phase: HopPhase::Stance,
                desired: desired_td.x_d,
                u1_d: desired_td.u1_d,
                actual: td.state,
                input: ControlInput::new(0.0, 0.0, 0.0, 0.0),
                v: v_td,
                v_dot_design: 0.0,
                saturation: Saturation::default(),
            });
        }
        state = lo;
        t_lo = td.t + sc.stance.t_s;
    }
    Ok(())
}

pub fn run_scenario(sc: &Scenario, params: &RobotParams, opts: &RunOptions) -> Result<TrajectoryLog, SimError> {
    Ok(run_scenario_with(sc, params, opts, None)?.log)
}

/// Paired reports with drag compensation on and off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DragComparison {
    pub on: RmseReport,
    pub off: RmseReport,
}

/// Runs `sc` with drag compensation on and off (in parallel) and reports both.
pub fn compare_drag_runs(
    sc: &Scenario,
    params: &RobotParams,
    opts: &RunOptions,
    cache: Option<&SystemCache>,
) -> Result<(RunOutput, RunOutput), SimError> {
    let jobs: Vec<Box<dyn FnOnce() -> Result<RunOutput, SimError> + Send + '_>> = [true, false]
        .into_iter()
        .map(|on| {
            let o = RunOptions { drag_comp: Some(on), ..*opts };
            Box::new(move || run_scenario_with(sc, params, &o, cache)) as Box<dyn FnOnce() -> _ + Send>
        })
        .collect();
    let mut res = run_parallel(jobs).into_iter();
    let on = res.next().expect("two runs")?;
    let off = res.next().expect("two runs")?;
    Ok((on, off))
}

pub fn compare_drag(sc: &Scenario, params: &RobotParams, opts: &RunOptions) -> Result<DragComparison, SimError> {
    let (on, off) = compare_drag_runs(sc, params, opts, None)?;
    Ok(DragComparison { on: rmse(&on.log)?, off: rmse(&off.log)? })
}
