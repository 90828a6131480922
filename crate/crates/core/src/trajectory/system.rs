//! Constraint matrices, the base solve and the null-space stage.

use nalgebra::{DMatrix, DVector, LU};

use super::{Keyframe, KeyframeRole, TrajectoryType};
use crate::error::TrajectoryError;

/// Largest accepted condition estimate of the equilibrated base system.
pub const MAX_CONDITION: f64 = 1e12;

const NULL_RANK_TOL: f64 = 1e-10;
const JITTER: f64 = 1e-12;

/// `i! / (i - k)!`, zero for `k > i`.
pub fn falling_factorial(i: usize, k: usize) -> f64 {
    if k > i {
        return 0.0;
    }
    ((i - k + 1)..=i).fold(1.0, |acc, m| acc * m as f64)
}

/// `d^k/dt^k [1, t, t², …]` with `ncoef` entries.
pub fn derivative_row(t: f64, k: usize, ncoef: usize) -> Vec<f64> {
    let mut row = vec![0.0; ncoef];
    let mut pow = 1.0;
    for i in k..ncoef {
        row[i] = falling_factorial(i, k) * pow;
        pow *= t;
    }
    row
}

/// Stacks [`derivative_row`] for each `(t, k)`.
pub fn constraint_matrix(rows: &[(f64, usize)], ncoef: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), ncoef);
    for (r, &(t, k)) in rows.iter().enumerate() {
        for (c, v) in derivative_row(t, k, ncoef).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Desired `(time, derivative)` pairs for one output, keyframe by keyframe.
pub fn constraint_rows(ty: TrajectoryType, output: usize, times: [f64; 3]) -> Vec<(f64, usize)> {
    let mut rows = Vec::with_capacity(9);
    for (role, t) in KeyframeRole::ALL.into_iter().zip(times) {
        for (k, desired) in ty.desired_pattern(role, output).into_iter().enumerate() {
            if desired {
                rows.push((t, k));
            }
        }
    }
    rows
}

/// Right-hand side in [`constraint_rows`] order; the pattern must already be checked.
pub(crate) fn desired_vector(ty: TrajectoryType, keyframes: &[Keyframe; 3], output: usize) -> DVector<f64> {
    let values: Vec<f64> = KeyframeRole::ALL
        .into_iter()
        .zip(keyframes)
        .flat_map(|(role, kf)| {
            ty.desired_pattern(role, output)
                .into_iter()
                .enumerate()
                .filter(|&(_, d)| d)
                .map(move |(k, _)| kf.values[output][k].expect("desired entry present"))
        })
        .collect();
    DVector::from_vec(values)
}

fn check_keyframes(ty: TrajectoryType, keyframes: &[Keyframe; 3], output: usize) -> Result<[f64; 3], TrajectoryError> {
    let times = [keyframes[0].t, keyframes[1].t, keyframes[2].t];
    if times[0] != 0.0 || !(times[1] > 0.0 && times[2] > times[1] && times[2].is_finite()) {
        return Err(TrajectoryError::BadTimes { t1: times[1], t2: times[2] });
    }
    if output >= 4 {
        return Err(TrajectoryError::BadOutput(output));
    }
    for (kf, role) in keyframes.iter().zip(KeyframeRole::ALL) {
        kf.check_pattern(ty, role)?;
    }
    Ok(times)
}

/// Square system `P_l c = ν` for one output.
pub fn build_system(
    ty: TrajectoryType,
    keyframes: &[Keyframe; 3],
    output: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), TrajectoryError> {
    let times = check_keyframes(ty, keyframes, output)?;
    let rows = constraint_rows(ty, output, times);
    Ok((constraint_matrix(&rows, rows.len()), desired_vector(ty, keyframes, output)))
}

/// LU factorization of a row- and column-equilibrated square system.
#[derive(Debug, Clone)]
pub struct BaseSolver {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    row_scale: DVector<f64>,
    col_scale: DVector<f64>,
    cond: f64,
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

impl BaseSolver {
    pub fn new(p: &DMatrix<f64>) -> Result<Self, TrajectoryError> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(TrajectoryError::IllConditioned { cond: f64::INFINITY });
        }
        let col_scale = DVector::from_iterator(n, p.column_iter().map(|c| 1.0 / c.amax()));
        let mut a = p.clone();
        for (j, s) in col_scale.iter().enumerate() {
            a.column_mut(j).scale_mut(*s);
        }
        let row_scale = DVector::from_iterator(n, a.row_iter().map(|r| 1.0 / r.amax()));
        for (i, s) in row_scale.iter().enumerate() {
            a.row_mut(i).scale_mut(*s);
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(TrajectoryError::IllConditioned { cond: f64::INFINITY });
        }
        let lu = a.clone().lu();
        let inv = lu.try_inverse().ok_or(TrajectoryError::IllConditioned { cond: f64::INFINITY })?;
        let cond = norm1(&a) * norm1(&inv);
        if !(cond < MAX_CONDITION) {
            return Err(TrajectoryError::IllConditioned { cond });
        }
        Ok(Self { lu, row_scale, col_scale, cond })
    }

    /// 1-norm condition estimate of the equilibrated matrix.
    pub fn condition(&self) -> f64 {
        self.cond
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let y = self.lu.solve(&rhs.component_mul(&self.row_scale)).expect("factorization is nonsingular");
        y.component_mul(&self.col_scale)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut b = rhs.clone();
        for (i, s) in self.row_scale.iter().enumerate() {
            b.row_mut(i).scale_mut(*s);
        }
        let mut y = self.lu.solve(&b).expect("factorization is nonsingular");
        for (i, s) in self.col_scale.iter().enumerate() {
            y.row_mut(i).scale_mut(*s);
        }
        y
    }
}

/// `c* = P_l⁻¹ ν`.
pub fn solve_base(p_l: &DMatrix<f64>, nu: &DVector<f64>) -> Result<DVector<f64>, TrajectoryError> {
    Ok(BaseSolver::new(p_l)?.solve(nu))
}

/// Orthonormal null-space basis of the constraint rows widened by `n_star`
/// columns, built as `[−P_l⁻¹ P_extra; I]` and orthonormalized.
pub(crate) fn null_basis_from(
    solver: &BaseSolver,
    rows: &[(f64, usize)],
    n_star: usize,
) -> Result<DMatrix<f64>, TrajectoryError> {
    let m = rows.len();
    if n_star == 0 {
        return Err(TrajectoryError::NullSpaceRank { expected: 0, found: 0 });
    }
    let wide = constraint_matrix(rows, m + n_star);
    let x = solver.solve_matrix(&wide.columns(m, n_star).into_owned());
    let mut raw = DMatrix::zeros(m + n_star, n_star);
    raw.view_mut((0, 0), (m, n_star)).copy_from(&(-x));
    raw.view_mut((m, 0), (n_star, n_star)).fill_with_identity();
    let qr = raw.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    let found = r.diagonal().iter().filter(|d| d.abs() > NULL_RANK_TOL * diag_max).count();
    if found != n_star || !diag_max.is_finite() {
        return Err(TrajectoryError::NullSpaceRank { expected: n_star, found });
    }
    Ok(qr.q())
}

/// Null-space basis `N_l` (one column per extra coefficient) for one output.
pub fn null_space_basis(
    ty: TrajectoryType,
    keyframes: &[Keyframe; 3],
    n_star: usize,
    output: usize,
) -> Result<DMatrix<f64>, TrajectoryError> {
    let times = check_keyframes(ty, keyframes, output)?;
    let rows = constraint_rows(ty, output, times);
    let solver = BaseSolver::new(&constraint_matrix(&rows, rows.len()))?;
    null_basis_from(&solver, &rows, n_star)
}

/// Null-space coordinates from the normal equations
/// `(M1ᵀM1) c_N = M1ᵀM2`, `M1 = P_N N_l`, `M2 = ν_extra − P_N c*`.
///
/// With fewer extras than basis vectors the normal matrix is singular by
/// construction and the minimum-norm interpolant is returned. A full-rank but
/// nearly singular normal matrix gets a `1e-12 λ_max` diagonal jitter.
pub fn solve_null_coefficients(
    p_n: &DMatrix<f64>,
    n_l: &DMatrix<f64>,
    c_star_padded: &DVector<f64>,
    nu_extra: &DVector<f64>,
) -> Result<DVector<f64>, TrajectoryError> {
    let s = p_n.nrows();
    let n_star = n_l.ncols();
    if s == 0 || nu_extra.len() != s || p_n.ncols() != n_l.nrows() || c_star_padded.len() != n_l.nrows() {
        return Err(TrajectoryError::NormalEquationSingular("dimension mismatch".into()));
    }
    let m1 = p_n * n_l;
    let m2 = nu_extra - p_n * c_star_padded;
    let sv = m1.singular_values();
    let sv_max = sv.amax();
    let rank = sv.iter().filter(|v| **v > NULL_RANK_TOL * sv_max).count();
    if !(sv_max > 0.0) || rank < s.min(n_star) {
        return Err(TrajectoryError::NormalEquationSingular(format!(
            "extra constraints have rank {rank} in the null-space image, need {}",
            s.min(n_star)
        )));
    }
    let mut a = m1.transpose() * &m1;
    let b = m1.transpose() * m2;
    if s < n_star {
        // rank-deficient by construction: minimum-norm solution from the
        // eigen-decomposition, dropping the (numerically) zero eigenvalues
        let eig = a.symmetric_eigen();
        let hi = eig.eigenvalues.amax();
        let mut x = DVector::zeros(n_star);
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > JITTER * hi {
                let v = eig.eigenvectors.column(i);
                x += v * (v.dot(&b) / lambda);
            }
        }
        return Ok(x);
    }
    let eig = a.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= JITTER * hi {
        for i in 0..n_star {
            a[(i, i)] += JITTER * hi;
        }
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| TrajectoryError::NormalEquationSingular("normal matrix not positive definite".into()))?;
    Ok(chol.solve(&b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials() {
        assert_eq!(falling_factorial(5, 0), 1.0);
        assert_eq!(falling_factorial(5, 2), 20.0);
        assert_eq!(falling_factorial(3, 3), 6.0);
        assert_eq!(falling_factorial(2, 3), 0.0);
    }

    #[test]
    fn derivative_row_values() {
        assert_eq!(derivative_row(2.0, 0, 4), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(derivative_row(2.0, 1, 4), vec![0.0, 1.0, 4.0, 12.0]);
        assert_eq!(derivative_row(2.0, 3, 4), vec![0.0, 0.0, 0.0, 6.0]);
        assert_eq!(derivative_row(0.0, 2, 4), vec![0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn cubic_hermite_base_solution() {
        // ψ(0)=0, ψ̇(0)=0, ψ(1)=1, ψ̇(1)=0
        let rows = [(0.0, 0), (0.0, 1), (1.0, 0), (1.0, 1)];
        let p = constraint_matrix(&rows, 4);
        let c = solve_base(&p, &DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0])).unwrap();
        let expect = [0.0, 0.0, 3.0, -2.0];
        for i in 0..4 {
            assert!((c[i] - expect[i]).abs() < 1e-14);
        }
        let c = solve_base(&p, &DVector::zeros(4)).unwrap();
        assert_eq!(c, DVector::zeros(4));
    }

    #[test]
    fn coincident_keyframes_are_ill_conditioned() {
        let rows = [(0.0, 0), (0.0, 1), (1.0, 0), (1.0 + 1e-15, 0)];
        let p = constraint_matrix(&rows, 4);
        assert!(matches!(BaseSolver::new(&p), Err(TrajectoryError::IllConditioned { .. })));
    }

    #[test]
    fn jitter_gives_exact_single_extra() {
        let rows = [(0.0, 0), (0.0, 1), (1.0, 0), (1.0, 1)];
        let solver = BaseSolver::new(&constraint_matrix(&rows, 4)).unwrap();
        let basis = null_basis_from(&solver, &rows, 2).unwrap();
        let p_n = constraint_matrix(&[(0.5, 0)], 6);
        let c_pad = DVector::zeros(6);
        let c_n = solve_null_coefficients(&p_n, &basis, &c_pad, &DVector::from_vec(vec![0.25])).unwrap();
        let c = &basis * c_n;
        assert!(((&p_n * &c)[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dependent_extras_are_rejected() {
        let rows = [(0.0, 0), (0.0, 1), (1.0, 0), (1.0, 1)];
        let solver = BaseSolver::new(&constraint_matrix(&rows, 4)).unwrap();
        let basis = null_basis_from(&solver, &rows, 2).unwrap();
        let p_n = constraint_matrix(&[(0.5, 0), (0.5, 0)], 6);
        let r = solve_null_coefficients(&p_n, &basis, &DVector::zeros(6), &DVector::from_vec(vec![0.1, 0.2]));
        assert!(matches!(r, Err(TrajectoryError::NormalEquationSingular(_))));
    }
}
