//! C ABI for hoptraj.
//!
//! Every function returns a [`HoptrajStatus`]. On failure a description is
//! kept per thread and can be read with [`hoptraj_last_error`]. Handles are
//! opaque and owned by the caller; free them with the matching `_free`.
//! Panics never cross the boundary; they surface as `HOPTRAJ_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hoptraj::control::{control, Gains};
use hoptraj::dynamics::{integrate_step, ControlInput, State12};
use hoptraj::error::{DynamicsError, FlatnessError, ParamsError, SimError, TrajectoryError};
use hoptraj::flatness::{flat_to_state, FlatState, FlatnessOptions};
use hoptraj::sim::{run_scenario_partial, write_run, RunOptions, Scenario};
use hoptraj::trajectory::{make_hop_trajectory, HopRequest, PolynomialTrajectory, TouchdownSpec, TrajectoryType};
use hoptraj::RobotParams;
use nalgebra::Vector3;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoptrajStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Parameter file or JSON rejected.
    Params = 3,
    /// Trajectory generation failed.
    Generation = 4,
    /// Time or index outside the trajectory.
    Domain = 5,
    /// Flatness or attitude singularity.
    Singularity = 6,
    /// A scenario run failed; partial output may exist.
    Simulation = 7,
    Io = 8,
    Panic = 99,
}

/// Robot parameters.
pub struct HoptrajParams(RobotParams);

/// One generated hop trajectory.
pub struct HoptrajTrajectory(PolynomialTrajectory);

/// Hop request. `td_position_mask` bit `i` marks `td_position[i]` as given;
/// unmarked axes follow the trajectory type's defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HoptrajHopRequest {
    /// Liftoff state `x y z vx vy vz φ θ ψ p q r`.
    pub lo_state: [f64; 12],
    /// 1, 2 or 3.
    pub trajectory_type: u32,
    pub td_position: [f64; 3],
    pub td_position_mask: u32,
    /// Touchdown ZYX Euler angles (rad).
    pub td_euler: [f64; 3],
    pub v_td: f64,
    pub t_m: f64,
    pub delta_t: f64,
    pub drag_comp: bool,
}

/// Desired state at one instant.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HoptrajDesired {
    pub state: [f64; 12],
    pub accel: [f64; 3],
    pub ang_accel: [f64; 3],
    pub u1: f64,
}

/// One control update.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HoptrajControl {
    /// Applied `U1 U2 U3 U4` after saturation.
    pub input: [f64; 4],
    /// Control law before saturation.
    pub raw: [f64; 4],
    pub v: f64,
    pub v_dot_design: f64,
    pub saturated: bool,
}

/// Outcome of a scenario run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HoptrajRunSummary {
    pub hops: u32,
    pub ticks: u32,
    pub rmse_pos: f64,
    pub rmse_vel: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(HoptrajStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(HoptrajStatus::NullPointer, format!("{what} is null"))
    }
    fn arg(msg: impl Into<String>) -> Self {
        Failure(HoptrajStatus::InvalidArgument, msg.into())
    }
}

impl From<ParamsError> for Failure {
    fn from(e: ParamsError) -> Self {
        Failure(HoptrajStatus::Params, e.to_string())
    }
}

impl From<TrajectoryError> for Failure {
    fn from(e: TrajectoryError) -> Self {
        let status = match e {
            TrajectoryError::Domain { .. } | TrajectoryError::BadOutput(_) => HoptrajStatus::Domain,
            _ => HoptrajStatus::Generation,
        };
        Failure(status, e.to_string())
    }
}

impl From<FlatnessError> for Failure {
    fn from(e: FlatnessError) -> Self {
        let status = match e {
            FlatnessError::Domain { .. } => HoptrajStatus::Domain,
            _ => HoptrajStatus::Singularity,
        };
        Failure(status, e.to_string())
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        Failure(HoptrajStatus::Singularity, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::Io(_) => HoptrajStatus::Io,
            SimError::Params(_) => HoptrajStatus::Params,
            SimError::Scenario(_) | SimError::Json(_) => HoptrajStatus::InvalidArgument,
            _ => HoptrajStatus::Simulation,
        };
        let mut msg = e.to_string();
        let mut cur = std::error::Error::source(&e);
        while let Some(c) = cur {
            msg.push_str(": ");
            msg.push_str(&c.to_string());
            cur = c.source();
        }
        Failure(status, msg)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HoptrajStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HoptrajStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            HoptrajStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::arg(format!("{what} is not UTF-8")))
}

/// Copies `N` doubles from a caller-owned buffer.
unsafe fn array<const N: usize>(p: *const f64, what: &str) -> Result<[f64; N], Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    let mut a = [0.0; N];
    a.copy_from_slice(std::slice::from_raw_parts(p, N));
    Ok(a)
}

fn vec3(a: &[f64]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Message of the last failure on this thread. Empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hoptraj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn hoptraj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The bundled nominal parameter set.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_params_nominal(params: *mut *mut HoptrajParams) -> HoptrajStatus {
    guard(|| {
        *out(params, "params")? = Box::into_raw(Box::new(HoptrajParams(RobotParams::nominal())));
        Ok(())
    })
}

/// Parameters from a JSON document.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_params_from_json(json: *const c_char, params: *mut *mut HoptrajParams) -> HoptrajStatus {
    guard(|| {
        let slot = out(params, "params")?;
        let p = RobotParams::from_json_str(string(json, "json")?)?;
        *slot = Box::into_raw(Box::new(HoptrajParams(p)));
        Ok(())
    })
}

/// Mass (kg) and maximum collective thrust (N).
#[no_mangle]
pub unsafe extern "C" fn hoptraj_params_mass(params: *const HoptrajParams, mass: *mut f64, max_thrust: *mut f64) -> HoptrajStatus {
    guard(|| {
        let p = &get(params, "params")?.0;
        *out(mass, "mass")? = p.mass;
        if let Some(t) = max_thrust.as_mut() {
            *t = p.max_thrust();
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hoptraj_params_free(params: *mut HoptrajParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Generates one hop trajectory.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_trajectory_generate(
    params: *const HoptrajParams,
    request: *const HoptrajHopRequest,
    trajectory: *mut *mut HoptrajTrajectory,
) -> HoptrajStatus {
    guard(|| {
        let p = &get(params, "params")?.0;
        let r = get(request, "request")?;
        let slot = out(trajectory, "trajectory")?;
        let ty = match r.trajectory_type {
            1 => TrajectoryType::T1,
            2 => TrajectoryType::T2,
            3 => TrajectoryType::T3,
            n => return Err(Failure::arg(format!("trajectory type {n} (expected 1, 2 or 3)"))),
        };
        if r.td_position_mask > 0b111 {
            return Err(Failure::arg(format!("td_position_mask {:#b} has bits above 2", r.td_position_mask)));
        }
        let position = std::array::from_fn(|i| (r.td_position_mask >> i & 1 == 1).then_some(r.td_position[i]));
        let td = TouchdownSpec { position, euler: vec3(&r.td_euler), v_td: r.v_td, u1_td: None };
        let lo = State12::from_array(&r.lo_state);
        let req = HopRequest { drag_comp: r.drag_comp, ..HopRequest::new(lo, ty, td, r.t_m, r.delta_t) };
        let traj = make_hop_trajectory(p, &req)?;
        *slot = Box::into_raw(Box::new(HoptrajTrajectory(traj)));
        Ok(())
    })
}

/// Parses a trajectory from its JSON form.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_trajectory_from_json(json: *const c_char, trajectory: *mut *mut HoptrajTrajectory) -> HoptrajStatus {
    guard(|| {
        let slot = out(trajectory, "trajectory")?;
        let traj = PolynomialTrajectory::from_json(string(json, "json")?)
            .map_err(|e| Failure::arg(format!("trajectory JSON: {e}")))?;
        *slot = Box::into_raw(Box::new(HoptrajTrajectory(traj)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hoptraj_trajectory_free(trajectory: *mut HoptrajTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Duration `t_m` of the trajectory (s).
#[no_mangle]
pub unsafe extern "C" fn hoptraj_trajectory_duration(trajectory: *const HoptrajTrajectory, duration: *mut f64) -> HoptrajStatus {
    guard(|| {
        *out(duration, "duration")? = get(trajectory, "trajectory")?.0.t2;
        Ok(())
    })
}

/// `k`-th derivative of flat output `output` (0 x, 1 y, 2 z, 3 ψ) at `t`.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_trajectory_evaluate(
    trajectory: *const HoptrajTrajectory,
    t: f64,
    output: u32,
    k: u32,
    value: *mut f64,
) -> HoptrajStatus {
    guard(|| {
        let traj = &get(trajectory, "trajectory")?.0;
        let slot = out(value, "value")?;
        *slot = traj.evaluate(t, output as usize, k as usize)?;
        Ok(())
    })
}

/// JSON form of the trajectory. Release with `hoptraj_string_free`.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_trajectory_to_json(trajectory: *const HoptrajTrajectory, json: *mut *mut c_char) -> HoptrajStatus {
    guard(|| {
        let traj = &get(trajectory, "trajectory")?.0;
        let slot = out(json, "json")?;
        *slot = CString::new(traj.to_json()).expect("JSON has no nul bytes").into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hoptraj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn desired_at(p: &RobotParams, traj: &PolynomialTrajectory, t: f64, drag_comp: bool) -> Result<FlatState, Failure> {
    if !(0.0..=traj.t2).contains(&t) {
        return Err(Failure(HoptrajStatus::Domain, format!("time {t} outside [0, {}]", traj.t2)));
    }
    Ok(flat_to_state(p, traj, t, None, &FlatnessOptions::with_drag_comp(drag_comp))?)
}

/// Desired state and feedforward thrust along the trajectory.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_trajectory_desired(
    params: *const HoptrajParams,
    trajectory: *const HoptrajTrajectory,
    t: f64,
    drag_comp: bool,
    desired: *mut HoptrajDesired,
) -> HoptrajStatus {
    guard(|| {
        let p = &get(params, "params")?.0;
        let traj = &get(trajectory, "trajectory")?.0;
        let slot = out(desired, "desired")?;
        let d = desired_at(p, traj, t, drag_comp)?;
        *slot = HoptrajDesired {
            state: d.x_d.to_array(),
            accel: d.accel.into(),
            ang_accel: d.ang_accel.into(),
            u1: d.u1_d,
        };
        Ok(())
    })
}

/// One control update tracking `trajectory` at `t` from `state` (12 doubles),
/// with the default gains.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_control(
    params: *const HoptrajParams,
    trajectory: *const HoptrajTrajectory,
    t: f64,
    drag_comp: bool,
    state: *const f64,
    result: *mut HoptrajControl,
) -> HoptrajStatus {
    guard(|| {
        let p = &get(params, "params")?.0;
        let traj = &get(trajectory, "trajectory")?.0;
        let x = State12::from_array(&array(state, "state")?);
        let slot = out(result, "result")?;
        let d = desired_at(p, traj, t, drag_comp)?;
        let c = control(p, &Gains::default(), &x, &d);
        *slot = HoptrajControl {
            input: c.input.to_vector().into(),
            raw: c.raw.to_vector().into(),
            v: c.errors.v,
            v_dot_design: c.v_dot_design,
            saturated: c.saturation.any(),
        };
        Ok(())
    })
}

/// Advances `state` (12 doubles) by one RK4 step of length `dt` under
/// `input` (4 doubles), in place.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_dynamics_step(
    params: *const HoptrajParams,
    state: *mut f64,
    input: *const f64,
    dt: f64,
) -> HoptrajStatus {
    guard(|| {
        let p = &get(params, "params")?.0;
        let u: [f64; 4] = array(input, "input")?;
        let x: [f64; 12] = array(state, "state")?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Failure::arg(format!("dt must be positive (got {dt})")));
        }
        let next = integrate_step(p, &State12::from_array(&x), &ControlInput::new(u[0], u[1], u[2], u[3]), dt)?;
        std::slice::from_raw_parts_mut(state, 12).copy_from_slice(&next.to_array());
        Ok(())
    })
}

/// Runs a scenario file. `drag_comp` is 1 (on), 0 (off) or −1 (scenario
/// default). When `out_dir` is non-null the logs are written there, also
/// for a run that fails part way.
#[no_mangle]
pub unsafe extern "C" fn hoptraj_run_scenario(
    path: *const c_char,
    drag_comp: i32,
    out_dir: *const c_char,
    summary: *mut HoptrajRunSummary,
) -> HoptrajStatus {
    guard(|| {
        let sc = Scenario::from_file(string(path, "path")?)?;
        let slot = out(summary, "summary")?;
        let drag_comp = match drag_comp {
            -1 => None,
            0 => Some(false),
            1 => Some(true),
            n => return Err(Failure::arg(format!("drag_comp {n} (expected -1, 0 or 1)"))),
        };
        let params = sc.load_params()?;
        let (run, err) = run_scenario_partial(&sc, &params, &RunOptions { drag_comp, ..Default::default() }, None);
        *slot = HoptrajRunSummary { hops: run.log.hops.len() as u32, ticks: run.log.ticks.len() as u32, ..Default::default() };
        if !out_dir.is_null() {
            let dir = string(out_dir, "out_dir")?;
            match write_run(Path::new(dir), &run.log, &run.trajectories) {
                Ok(r) => {
                    slot.rmse_pos = r.rmse_pos;
                    slot.rmse_vel = r.rmse_vel;
                }
                Err(SimError::EmptyLog) => {}
                Err(e) => return Err(e.into()),
            }
        } else if let Ok(r) = hoptraj::sim::rmse(&run.log) {
            slot.rmse_pos = r.rmse_pos;
            slot.rmse_vel = r.rmse_vel;
        }
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    })
}
