//! Keyframe polynomial trajectories over the flat outputs `(x, y, z, ψ)`.
//!
//! A hop is described by three keyframes: liftoff `α0` at `t = 0`, a
//! reorientation keyframe `α1` at `t1` and touchdown `α2` at `t2`. Each flat
//! output is a single monomial polynomial whose order is one less than the
//! number of desired entries for that output, optionally widened by `n*`
//! null-space terms that let extra constraints reshape the path without
//! touching the keyframes.

mod cache;
mod hop;
mod system;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{FlatnessError, TrajectoryError};
use crate::flatness::{FlatSample, FlatSource};

pub use cache::{OutputSystem, SystemCache};
pub use hop::{
    hop_keyframes, make_hop_trajectory, make_hop_trajectory_cached, td_rotation, HopRequest, TouchdownSpec,
    DEFAULT_LO_THRUST_FACTOR, DEFAULT_N_STAR, DEFAULT_TD_THRUST_FACTOR, FREE_FALL_SAMPLES,
};
pub use system::{
    build_system, constraint_matrix, constraint_rows, derivative_row, falling_factorial, null_space_basis,
    solve_base, solve_null_coefficients, BaseSolver, MAX_CONDITION,
};

/// Touchdown free-value pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrajectoryType {
    /// Touchdown `x`, `y` positions free.
    T1,
    /// Touchdown `z` position free.
    T2,
    /// Fully specified touchdown.
    T3,
}

impl TrajectoryType {
    pub const ALL: [TrajectoryType; 3] = [TrajectoryType::T1, TrajectoryType::T2, TrajectoryType::T3];

    /// Which of `[ν, ν̇, ν̈, ν⃛]` are desired for `output` at keyframe `role`.
    pub fn desired_pattern(self, role: KeyframeRole, output: usize) -> [bool; 4] {
        const ALL: [bool; 4] = [true; 4];
        const YAW: [bool; 4] = [true, true, false, false];
        if output == PSI {
            return match role {
                KeyframeRole::Reorient => [false; 4],
                _ => YAW,
            };
        }
        match role {
            KeyframeRole::LiftOff => ALL,
            KeyframeRole::Reorient => [false, false, true, false],
            KeyframeRole::TouchDown => {
                let position_free = match self {
                    TrajectoryType::T1 => output != Z,
                    TrajectoryType::T2 => output == Z,
                    TrajectoryType::T3 => false,
                };
                [!position_free, true, true, true]
            }
        }
    }

    /// Number of desired entries (= base polynomial order + 1) for `output`.
    pub fn constraint_count(self, output: usize) -> usize {
        KeyframeRole::ALL
            .iter()
            .map(|&role| self.desired_pattern(role, output).iter().filter(|&&d| d).count())
            .sum()
    }
}

impl std::fmt::Display for TrajectoryType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyframeRole {
    LiftOff,
    Reorient,
    TouchDown,
}

impl KeyframeRole {
    pub const ALL: [KeyframeRole; 3] = [KeyframeRole::LiftOff, KeyframeRole::Reorient, KeyframeRole::TouchDown];
}

pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;
pub const PSI: usize = 3;
const REFINEMENT_STEPS: usize = 2;

pub const OUTPUT_NAMES: [&str; 4] = ["x", "y", "z", "psi"];

/// Desired flat outputs and derivatives at one time. `values[j][k]` is the
/// k-th derivative of output `j`; `None` marks a free entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub values: [[Option<f64>; 4]; 4],
}

impl Keyframe {
    pub fn free(t: f64) -> Self {
        Self { t, values: [[None; 4]; 4] }
    }

    pub fn set(&mut self, output: usize, k: usize, value: f64) -> &mut Self {
        self.values[output][k] = Some(value);
        self
    }

    /// Sets derivative `k` of `x`, `y`, `z` from a vector.
    pub fn set_vec(&mut self, k: usize, v: &Vector3<f64>) -> &mut Self {
        for j in 0..3 {
            self.values[j][k] = Some(v[j]);
        }
        self
    }

    /// Checks the desired/free pattern against a trajectory type.
    pub fn check_pattern(&self, ty: TrajectoryType, role: KeyframeRole) -> Result<(), TrajectoryError> {
        for j in 0..4 {
            let pattern = ty.desired_pattern(role, j);
            for k in 0..4 {
                match (pattern[k], self.values[j][k]) {
                    (true, None) => {
                        return Err(TrajectoryError::InconsistentFlags(format!(
                            "{ty}: {role:?} {} derivative {k} must be desired",
                            OUTPUT_NAMES[j]
                        )))
                    }
                    (false, Some(_)) => {
                        return Err(TrajectoryError::InconsistentFlags(format!(
                            "{ty}: {role:?} {} derivative {k} must be free",
                            OUTPUT_NAMES[j]
                        )))
                    }
                    (true, Some(v)) if !v.is_finite() => {
                        return Err(TrajectoryError::InvalidRequest(format!(
                            "{role:?} {} derivative {k} is not finite",
                            OUTPUT_NAMES[j]
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Extra constraint solved in the null space: `d^k/dt^k ν_j(t) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraConstraint {
    pub t: f64,
    pub output: usize,
    pub k: usize,
    pub value: f64,
}

/// Coefficients of one flat output, lowest power first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPolynomial {
    /// Order fixed by the keyframe constraints.
    pub base_order: usize,
    pub coeffs: Vec<f64>,
}

impl OutputPolynomial {
    /// `d^k/dt^k` at `t`; zero when `k` exceeds the order.
    ///
    /// Compensated Horner evaluation, so the result is as accurate as if it
    /// were computed in twice the working precision and then rounded.
    pub fn eval(&self, t: f64, k: usize) -> f64 {
        eval_compensated(&self.coeffs, t, k)
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn eval_compensated(coeffs: &[f64], t: f64, k: usize) -> f64 {
    let n = coeffs.len();
    if k >= n {
        return 0.0;
    }
    let (mut s, mut comp) = two_prod(coeffs[n - 1], falling_factorial(n - 1, k));
    for i in (k..n - 1).rev() {
        let (a, a_err) = two_prod(coeffs[i], falling_factorial(i, k));
        let (p, p_err) = two_prod(s, t);
        let (sum, sum_err) = two_sum(p, a);
        s = sum;
        comp = comp * t + (p_err + sum_err + a_err);
    }
    s + comp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTrajectory {
    pub ty: TrajectoryType,
    pub t1: f64,
    pub t2: f64,
    pub n_star: usize,
    pub drag_comp: bool,
    pub keyframes: [Keyframe; 3],
    /// `x`, `y`, `z`, `ψ`.
    pub outputs: [OutputPolynomial; 4],
}

impl PolynomialTrajectory {
    pub fn duration(&self) -> f64 {
        self.t2
    }

    fn check_domain(&self, t: f64) -> Result<(), TrajectoryError> {
        let slack = 1e-12 * (1.0 + self.t2);
        if !(t >= -slack && t <= self.t2 + slack) {
            return Err(TrajectoryError::Domain { t, end: self.t2 });
        }
        Ok(())
    }

    /// `d^k/dt^k` of output `j` at `t ∈ [0, t2]`.
    pub fn evaluate(&self, t: f64, j: usize, k: usize) -> Result<f64, TrajectoryError> {
        if j >= 4 {
            return Err(TrajectoryError::BadOutput(j));
        }
        self.check_domain(t)?;
        Ok(self.outputs[j].eval(t, k))
    }

    /// Flat sample without the domain check (polynomial extrapolation).
    pub fn sample_unchecked(&self, t: f64) -> FlatSample {
        let v = |k: usize| Vector3::new(self.outputs[X].eval(t, k), self.outputs[Y].eval(t, k), self.outputs[Z].eval(t, k));
        let psi = &self.outputs[PSI];
        FlatSample {
            t,
            r: v(0),
            r_dot: v(1),
            r_ddot: v(2),
            r_jerk: v(3),
            r_snap: v(4),
            psi: psi.eval(t, 0),
            psi_dot: psi.eval(t, 1),
            psi_ddot: psi.eval(t, 2),
        }
    }

    /// Position, velocity, acceleration, jerk and snap plus yaw up to `ψ̈`.
    pub fn sample_flat(&self, t: f64) -> Result<FlatSample, TrajectoryError> {
        self.check_domain(t)?;
        Ok(self.sample_unchecked(t))
    }

    /// Largest deviation from the desired keyframe entries.
    pub fn keyframe_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for kf in &self.keyframes {
            for j in 0..4 {
                for k in 0..4 {
                    if let Some(v) = kf.values[j][k] {
                        worst = worst.max((self.outputs[j].eval(kf.t, k) - v).abs());
                    }
                }
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// View that keeps evaluating the polynomials past `t2` up to `end`.
    pub fn extended(&self, end: f64) -> Extended<'_> {
        Extended { traj: self, end: end.max(self.t2) }
    }
}

impl FlatSource for PolynomialTrajectory {
    fn domain(&self) -> (f64, f64) {
        (0.0, self.t2)
    }

    fn flat_sample(&self, t: f64) -> Result<FlatSample, FlatnessError> {
        self.sample_flat(t).map_err(|_| FlatnessError::Domain { t, start: 0.0, end: self.t2 })
    }
}

/// A trajectory whose domain runs past touchdown by polynomial extrapolation.
#[derive(Debug, Clone, Copy)]
pub struct Extended<'a> {
    traj: &'a PolynomialTrajectory,
    end: f64,
}

impl FlatSource for Extended<'_> {
    fn domain(&self) -> (f64, f64) {
        (0.0, self.end)
    }

    fn flat_sample(&self, t: f64) -> Result<FlatSample, FlatnessError> {
        let slack = 1e-12 * (1.0 + self.end);
        if !(t >= -slack && t <= self.end + slack) {
            return Err(FlatnessError::Domain { t, start: 0.0, end: self.end });
        }
        Ok(self.traj.sample_unchecked(t))
    }
}

/// Solves every output of a three-keyframe trajectory.
///
/// `keyframes[0].t` must be zero. Extras are grouped by output and solved in
/// that output's null space; outputs without extras keep the base solution.
pub fn generate(
    ty: TrajectoryType,
    keyframes: [Keyframe; 3],
    n_star: usize,
    extras: &[ExtraConstraint],
    drag_comp: bool,
    cache: Option<&SystemCache>,
) -> Result<PolynomialTrajectory, TrajectoryError> {
    let (t0, t1, t2) = (keyframes[0].t, keyframes[1].t, keyframes[2].t);
    if t0 != 0.0 || !(t1 > 0.0 && t2 > t1 && t2.is_finite()) {
        return Err(TrajectoryError::BadTimes { t1, t2 });
    }
    for (kf, role) in keyframes.iter().zip(KeyframeRole::ALL) {
        kf.check_pattern(ty, role)?;
    }
    if !extras.is_empty() && n_star == 0 {
        return Err(TrajectoryError::BadExtra { t: extras[0].t, reason: "extras need n* >= 1".into() });
    }
    for e in extras {
        let near = |a: f64| (e.t - a).abs() <= 1e-9 * (1.0 + t2);
        if e.output >= 4 {
            return Err(TrajectoryError::BadOutput(e.output));
        }
        if !(e.t > 0.0 && e.t < t2) || near(t1) || near(0.0) || near(t2) {
            return Err(TrajectoryError::BadExtra { t: e.t, reason: "must lie strictly inside (0, t2), away from t1".into() });
        }
        if !e.value.is_finite() {
            return Err(TrajectoryError::BadExtra { t: e.t, reason: "non-finite value".into() });
        }
        let order = ty.constraint_count(e.output) - 1 + n_star;
        if e.k > order {
            return Err(TrajectoryError::BadExtra { t: e.t, reason: format!("derivative {} exceeds order {order}", e.k) });
        }
    }

    let mut outputs: Vec<OutputPolynomial> = Vec::with_capacity(4);
    for j in 0..4 {
        let system = match cache {
            Some(c) => c.get(ty, j, t1, t2, n_star)?,
            None => std::sync::Arc::new(OutputSystem::build(ty, j, t1, t2, n_star)?),
        };
        let nu = system::desired_vector(ty, &keyframes, j);
        let c_star = system.solver.solve(&nu);
        let ncoef = system.n + 1 + n_star;
        let mut coeffs = nalgebra::DVector::zeros(ncoef);
        coeffs.rows_mut(0, system.n + 1).copy_from(&c_star);

        let mine: Vec<&ExtraConstraint> = extras.iter().filter(|e| e.output == j).collect();
        if !mine.is_empty() {
            let basis = system.null_basis.as_ref().expect("null basis exists when n* >= 1");
            let rows: Vec<(f64, usize)> = mine.iter().map(|e| (e.t, e.k)).collect();
            let p_n = constraint_matrix(&rows, ncoef);
            let nu_extra = nalgebra::DVector::from_iterator(mine.len(), mine.iter().map(|e| e.value));
            let c_n = solve_null_coefficients(&p_n, basis, &coeffs, &nu_extra)?;
            coeffs += basis * c_n;
        }
        // iterative refinement against accurately evaluated keyframe residuals
        for _ in 0..REFINEMENT_STEPS {
            let residual = nalgebra::DVector::from_iterator(
                nu.len(),
                system.rows.iter().zip(nu.iter()).map(|(&(t, k), v)| eval_compensated(coeffs.as_slice(), t, k) - v),
            );
            let fix = system.solver.solve(&residual);
            let mut head = coeffs.rows_mut(0, system.n + 1);
            head -= fix;
        }
        outputs.push(OutputPolynomial { base_order: system.n, coeffs: coeffs.iter().copied().collect() });
    }
    let outputs: [OutputPolynomial; 4] = outputs.try_into().expect("four outputs");
    Ok(PolynomialTrajectory { ty, t1, t2, n_star, drag_comp, keyframes, outputs })
}
