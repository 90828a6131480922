use hoptraj::dynamics::{euler_to_rotation, State12};
use hoptraj::flatness::{flat_kinematics, FlatnessOptions};
use hoptraj::trajectory::{
    build_system, constraint_matrix, generate, make_hop_trajectory, make_hop_trajectory_cached, null_space_basis,
    solve_base, solve_null_coefficients, ExtraConstraint, HopRequest, Keyframe, KeyframeRole, PolynomialTrajectory,
    SystemCache, TouchdownSpec, TrajectoryType, PSI, X, Y, Z,
};
use hoptraj::{RobotParams, TrajectoryError};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lo_state(theta_deg: f64, speed: f64) -> State12 {
    let euler = Vector3::new(0.0, theta_deg.to_radians(), 0.0);
    let z_b = euler_to_rotation(&euler).unwrap().column(2).into_owned();
    State12::new(Vector3::new(0.0, 0.0, 0.2), speed * z_b, euler, Vector3::zeros())
}

fn td(pos: [f64; 3], euler_deg: [f64; 3]) -> TouchdownSpec {
    TouchdownSpec {
        position: pos.map(Some),
        euler: Vector3::from(euler_deg.map(f64::to_radians)),
        v_td: 5.0,
        u1_td: None,
    }
}

/// Keyframes with random values in the pattern of `ty`.
fn random_keyframes(rng: &mut ChaCha8Rng, ty: TrajectoryType, t1: f64, t2: f64) -> [Keyframe; 3] {
    let mut kfs = [Keyframe::free(0.0), Keyframe::free(t1), Keyframe::free(t2)];
    for (kf, role) in kfs.iter_mut().zip(KeyframeRole::ALL) {
        for j in 0..4 {
            for (k, d) in ty.desired_pattern(role, j).into_iter().enumerate() {
                if d {
                    kf.set(j, k, rng.random_range(-5.0..5.0));
                }
            }
        }
    }
    kfs
}

fn fig2_request(ty: TrajectoryType, td_pitch: f64) -> HopRequest {
    HopRequest::new(lo_state(30.0, 5.0), ty, td([2.0, 0.0, 0.2], [0.0, td_pitch, 0.0]), 1.75, 0.05)
}

#[test]
fn psi_system_shape_and_t3_residual() {
    let p = RobotParams::nominal();
    let traj = make_hop_trajectory(&p, &fig2_request(TrajectoryType::T3, 0.0)).unwrap();
    for (ty, j, rows) in [(TrajectoryType::T3, Z, 9), (TrajectoryType::T1, X, 8), (TrajectoryType::T2, PSI, 4)] {
        let mut kfs = traj.keyframes;
        if ty != TrajectoryType::T3 {
            let j_free = if ty == TrajectoryType::T1 { [X, Y] } else { [Z, Z] };
            for jf in j_free {
                kfs[2].values[jf][0] = None;
            }
        }
        let (pl, nu) = build_system(ty, &kfs, j).unwrap();
        assert_eq!((pl.nrows(), pl.ncols()), (rows, rows));
        let c = solve_base(&pl, &nu).unwrap();
        let res = (&pl * &c - &nu).norm();
        assert!(res <= 1e-10 * (pl.norm() * c.norm() + nu.norm()), "residual {res}");
    }
}

#[test]
fn null_space_matches_svd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for ty in TrajectoryType::ALL {
        for _ in 0..20 {
            let t2 = rng.random_range(0.5..3.0);
            let t1 = t2 - rng.random_range(0.02..0.2);
            let kfs = random_keyframes(&mut rng, ty, t1, t2);
            for j in 0..4 {
                let n_l = null_space_basis(ty, &kfs, 2, j).unwrap();
                let rows = ty.constraint_count(j);
                assert_eq!(n_l.ncols(), 2);
                let times = [0.0, t1, t2];
                let pairs = hoptraj::trajectory::constraint_rows(ty, j, times);
                let wide = constraint_matrix(&pairs, rows + 2);
                // orthonormal columns
                let gram = n_l.transpose() * &n_l;
                assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
                // annihilated by the widened constraint rows, relative to their scale
                assert!((&wide * &n_l).amax() <= 1e-10 * wide.amax(), "‖P N‖ = {}", (&wide * &n_l).amax());

                // oracle: last right-singular vectors of the zero-padded square matrix
                let mut square = DMatrix::zeros(rows + 2, rows + 2);
                square.view_mut((0, 0), (rows, rows + 2)).copy_from(&wide);
                let svd = square.svd(false, true);
                let v_t = svd.v_t.unwrap();
                let mut order: Vec<usize> = (0..rows + 2).collect();
                order.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
                let oracle = DMatrix::from_fn(rows + 2, 2, |r, c| v_t[(order[c], r)]);
                // sine of the largest principal angle
                let proj = &oracle - &n_l * (n_l.transpose() * &oracle);
                let sin = proj.svd(false, false).singular_values.amax();
                assert!(sin < 1e-8, "{ty} output {j}: principal angle {sin}");
            }
        }
    }
}

#[test]
fn pure_null_polynomial_vanishes_at_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let kfs = random_keyframes(&mut rng, TrajectoryType::T2, 1.3, 1.4);
    let n_l = null_space_basis(TrajectoryType::T2, &kfs, 2, Z).unwrap();
    let pairs = hoptraj::trajectory::constraint_rows(TrajectoryType::T2, Z, [0.0, 1.3, 1.4]);
    for col in n_l.column_iter() {
        let poly = hoptraj::trajectory::OutputPolynomial { base_order: 7, coeffs: col.iter().copied().collect() };
        for &(t, k) in &pairs {
            assert!(poly.eval(t, k).abs() < 1e-10);
        }
    }
}

#[test]
fn null_space_counts_follow_n_star() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kfs = random_keyframes(&mut rng, TrajectoryType::T3, 1.0, 1.1);
    for n_star in 1..=3 {
        assert_eq!(null_space_basis(TrajectoryType::T3, &kfs, n_star, X).unwrap().ncols(), n_star);
    }
}

#[test]
fn extras_at_own_values_change_nothing() {
    let p = RobotParams::nominal();
    let base = make_hop_trajectory(&p, &fig2_request(TrajectoryType::T3, 0.0)).unwrap();
    let extras: Vec<_> = [(0.6, Z, 0), (1.1, X, 1)]
        .into_iter()
        .map(|(t, j, k)| ExtraConstraint { t, output: j, k, value: base.evaluate(t, j, k).unwrap() })
        .collect();
    let req = HopRequest { extras, ..fig2_request(TrajectoryType::T3, 0.0) };
    let shaped = make_hop_trajectory(&p, &req).unwrap();
    for j in 0..4 {
        for (a, b) in base.outputs[j].coeffs.iter().zip(&shaped.outputs[j].coeffs) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

fn keyframe_values(traj: &PolynomialTrajectory) -> Vec<f64> {
    let mut out = Vec::new();
    for kf in &traj.keyframes {
        for j in 0..4 {
            for k in 0..4 {
                if kf.values[j][k].is_some() {
                    out.push(traj.outputs[j].eval(kf.t, k));
                }
            }
        }
    }
    out
}

#[test]
fn one_or_two_extras_interpolate_exactly() {
    let p = RobotParams::nominal();
    let base_req = fig2_request(TrajectoryType::T3, 0.0);
    let base = make_hop_trajectory(&p, &base_req).unwrap();
    let base_kf = keyframe_values(&base);
    let shift = |t: f64, output: usize, k: usize, by: f64| ExtraConstraint {
        t,
        output,
        k,
        value: base.evaluate(t, output, k).unwrap() + by,
    };
    for extras in [
        vec![shift(0.9, Z, 0, 0.4)],
        vec![shift(0.6, X, 0, -0.3), shift(1.2, X, 1, 0.5)],
        vec![shift(0.5, Y, 0, 0.25), shift(1.0, Y, 2, -1.0)],
    ] {
        let req = HopRequest { extras: extras.clone(), ..base_req.clone() };
        let traj = make_hop_trajectory(&p, &req).unwrap();
        for e in &extras {
            let got = traj.evaluate(e.t, e.output, e.k).unwrap();
            assert!((got - e.value).abs() <= 1e-8, "extra {e:?}: {got}");
        }
        for (a, b) in keyframe_values(&traj).iter().zip(&base_kf) {
            assert!((a - b).abs() <= 1e-10, "keyframe moved: {a} vs {b}");
        }
    }
}

#[test]
fn single_extra_matches_constrained_least_squares_oracle() {
    // oracle: minimum-norm correction in null-space coordinates, via the
    // pseudo-inverse of the 1×2 image row
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kfs = random_keyframes(&mut rng, TrajectoryType::T3, 1.5, 1.6);
    let (pl, nu) = build_system(TrajectoryType::T3, &kfs, Y).unwrap();
    let c_star = solve_base(&pl, &nu).unwrap();
    let n_l = null_space_basis(TrajectoryType::T3, &kfs, 2, Y).unwrap();
    let mut c_pad = DVector::zeros(11);
    c_pad.rows_mut(0, 9).copy_from(&c_star);
    let p_n = constraint_matrix(&[(0.8, 0)], 11);
    let target = DVector::from_vec(vec![2.0]);
    let c_n = solve_null_coefficients(&p_n, &n_l, &c_pad, &target).unwrap();
    let m1 = &p_n * &n_l;
    let m2 = &target - &p_n * &c_pad;
    let oracle = m1.transpose() * (m2[0] / m1.norm_squared());
    assert!((&c_n - &oracle).amax() < 1e-8, "{c_n} vs {oracle}");
}

#[test]
fn five_extras_match_dense_least_squares_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for ty in TrajectoryType::ALL {
        let kfs = random_keyframes(&mut rng, ty, 1.6, 1.75);
        for j in 0..4 {
            let (pl, nu) = build_system(ty, &kfs, j).unwrap();
            let n = pl.nrows();
            let c_star = solve_base(&pl, &nu).unwrap();
            let n_l = null_space_basis(ty, &kfs, 2, j).unwrap();
            let mut c_pad = DVector::zeros(n + 2);
            c_pad.rows_mut(0, n).copy_from(&c_star);
            let pairs: Vec<(f64, usize)> = (0..5).map(|i| (0.2 + 0.25 * i as f64, i % 3)).collect();
            let p_n = constraint_matrix(&pairs, n + 2);
            let target = DVector::from_fn(5, |i, _| rng.random_range(-2.0..2.0) + i as f64);
            let c_n = solve_null_coefficients(&p_n, &n_l, &c_pad, &target).unwrap();

            // oracle: SVD least squares on the null-space coordinates
            let m1 = &p_n * &n_l;
            let m2 = &target - &p_n * &c_pad;
            let oracle = m1.clone().svd(true, true).solve(&m2, 1e-14).unwrap();
            let scale = 1.0 + oracle.amax();
            assert!((&c_n - &oracle).amax() <= 1e-8 * scale, "{ty} output {j}: {c_n} vs {oracle}");
        }
    }
}

#[test]
fn evaluate_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let coeffs: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
        let poly = hoptraj::trajectory::OutputPolynomial { base_order: 8, coeffs };
        let t = rng.random_range(0.2..1.5);
        for k in 1..=5 {
            let err = |h: f64| ((poly.eval(t + h, k - 1) - poly.eval(t - h, k - 1)) / (2.0 * h) - poly.eval(t, k)).abs();
            let (e1, e2) = (err(1e-3), err(5e-4));
            assert!(e1 < 1e-3 * (1.0 + poly.eval(t, k).abs()));
            // second order: halving h quarters the error
            if e1 > 1e-9 {
                assert!(e2 < 0.3 * e1, "k = {k}: {e1} -> {e2}");
            }
        }
    }
}

#[test]
fn domain_is_enforced() {
    let p = RobotParams::nominal();
    let traj = make_hop_trajectory(&p, &fig2_request(TrajectoryType::T3, 0.0)).unwrap();
    assert!(matches!(traj.evaluate(1.8, X, 0), Err(TrajectoryError::Domain { .. })));
    assert!(matches!(traj.evaluate(-0.01, X, 0), Err(TrajectoryError::Domain { .. })));
    assert!(matches!(traj.evaluate(1.0, 4, 0), Err(TrajectoryError::BadOutput(4))));
    assert_eq!(traj.evaluate(0.0, Z, 0).unwrap(), 0.2);
    let s = traj.sample_flat(0.0).unwrap();
    assert!((s.r_dot - lo_state(30.0, 5.0).velocity).norm() < 1e-12);
    assert_eq!(s.r_snap[0], traj.outputs[X].eval(0.0, 4));
}

#[test]
fn touchdown_attitude_is_reproduced() {
    let p = RobotParams::nominal();
    for drag_comp in [true, false] {
        for pitch in [-30.0, 30.0, 0.0] {
            let req = HopRequest { drag_comp, ..fig2_request(TrajectoryType::T3, pitch) };
            let traj = make_hop_trajectory(&p, &req).unwrap();
            let s = traj.sample_flat(1.75).unwrap();
            let kin = flat_kinematics(&p, &s, None, &FlatnessOptions::with_drag_comp(drag_comp)).unwrap();
            let expect = euler_to_rotation(&req.td.euler).unwrap();
            assert!((kin.r_bw - expect).amax() < 1e-8, "pitch {pitch}, drag {drag_comp}");
            assert!((kin.u1 - 0.2 * p.weight()).abs() < 1e-8);
        }
    }
}

#[test]
fn vertical_hop_stays_in_plane() {
    let p = RobotParams::nominal().without_drag();
    let req = HopRequest {
        drag_comp: false,
        ..HopRequest::new(lo_state(0.0, 5.0), TrajectoryType::T3, td([0.0, 0.0, 0.2], [0.0, 0.0, 0.0]), 1.0, 0.05)
    };
    let traj = make_hop_trajectory(&p, &req).unwrap();
    for i in 0..=100 {
        let t = i as f64 / 100.0;
        for k in 0..5 {
            assert_eq!(traj.evaluate(t, X, k).unwrap(), 0.0);
            assert_eq!(traj.evaluate(t, Y, k).unwrap(), 0.0);
        }
    }
}

#[test]
fn free_fall_demand_is_rejected() {
    let p = RobotParams::nominal();
    // liftoff with no thrust: ν̈(0) = −g z_W
    let req = HopRequest { lo_u1: Some(0.0), ..fig2_request(TrajectoryType::T3, 0.0) };
    assert!(matches!(make_hop_trajectory(&p, &req), Err(TrajectoryError::FreeFallThrust { .. })));
}

#[test]
fn cache_gives_identical_trajectories() {
    let p = RobotParams::nominal();
    let cache = SystemCache::new();
    for ty in TrajectoryType::ALL {
        let req = fig2_request(ty, -30.0);
        let a = make_hop_trajectory(&p, &req).unwrap();
        let b = make_hop_trajectory_cached(&p, &req, Some(&cache)).unwrap();
        let c = make_hop_trajectory_cached(&p, &req, Some(&cache)).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
    assert_eq!(cache.len(), 12);
}

#[test]
fn json_round_trip() {
    let p = RobotParams::nominal();
    let traj = make_hop_trajectory(&p, &fig2_request(TrajectoryType::T1, 30.0)).unwrap();
    let back = PolynomialTrajectory::from_json(&traj.to_json()).unwrap();
    assert_eq!(traj, back);
    let v: serde_json::Value = serde_json::from_str(&traj.to_json()).unwrap();
    assert!(v["outputs"][0]["coeffs"].is_array());
    assert_eq!(v["t2"], 1.75);
}

#[test]
fn inconsistent_flags_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut kfs = random_keyframes(&mut rng, TrajectoryType::T1, 1.0, 1.2);
    kfs[2].set(X, 0, 1.0);
    assert!(matches!(
        generate(TrajectoryType::T1, kfs, 2, &[], true, None),
        Err(TrajectoryError::InconsistentFlags(_))
    ));
    let kfs = random_keyframes(&mut rng, TrajectoryType::T1, 1.2, 1.0);
    assert!(matches!(generate(TrajectoryType::T1, kfs, 2, &[], true, None), Err(TrajectoryError::BadTimes { .. })));
}

#[test]
fn extras_on_keyframe_times_are_rejected() {
    let p = RobotParams::nominal();
    for t in [0.0, 1.7, 1.75, 2.0] {
        let req = HopRequest {
            extras: vec![ExtraConstraint { t, output: Z, k: 0, value: 1.0 }],
            ..fig2_request(TrajectoryType::T3, 0.0)
        };
        assert!(matches!(make_hop_trajectory(&p, &req), Err(TrajectoryError::BadExtra { .. })), "t = {t}");
    }
}

/// Random but physically sensible hop request; redrawn until generation
/// succeeds (some draws demand zero thrust and are rejected by design).
fn random_hop(rng: &mut ChaCha8Rng, p: &RobotParams) -> (HopRequest, PolynomialTrajectory) {
    loop {
        let ty = TrajectoryType::ALL[rng.random_range(0..3)];
        let t_m = rng.random_range(0.5..3.0);
        let dt = rng.random_range(0.02..0.2);
        let euler = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.7..0.7), rng.random_range(-3.0..3.0));
        let z_b = euler_to_rotation(&euler).unwrap().column(2).into_owned();
        let lo = State12::new(
            Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0)),
            rng.random_range(1.0..6.0) * z_b,
            euler,
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        );
        let td = TouchdownSpec {
            position: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0)].map(Some),
            euler: Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.7..0.7), rng.random_range(-3.0..3.0)),
            v_td: rng.random_range(1.0..6.0),
            u1_td: None,
        };
        let req = HopRequest { drag_comp: rng.random_bool(0.5), ..HopRequest::new(lo, ty, td, t_m, dt) };
        if let Ok(traj) = make_hop_trajectory(p, &req) {
            return (req, traj);
        }
    }
}

/// `Σ |c_i| i!/(i-k)! |t|^(i-k)`: the magnitude that bounds rounding in an evaluation.
fn eval_scale(coeffs: &[f64], t: f64, k: usize) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(k)
        .map(|(i, c)| c.abs() * hoptraj::trajectory::falling_factorial(i, k) * t.abs().powi((i - k) as i32))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_keyframes_are_reproduced(seed in any::<u64>(), t2 in 0.5f64..3.0, dt in 0.02f64..0.2, ty in 0usize..3) {
        // arbitrary keyframe data: exact up to the rounding of the monomial representation
        let ty = TrajectoryType::ALL[ty];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kfs = random_keyframes(&mut rng, ty, t2 - dt, t2);
        let traj = generate(ty, kfs, 2, &[], true, None).unwrap();
        for kf in &traj.keyframes {
            for j in 0..4 {
                for k in 0..4 {
                    if let Some(v) = kf.values[j][k] {
                        let c = &traj.outputs[j].coeffs;
                        let tol = 1e-8f64.max(64.0 * f64::EPSILON * eval_scale(c, kf.t, k));
                        prop_assert!((traj.outputs[j].eval(kf.t, k) - v).abs() <= tol);
                    }
                }
            }
        }
    }

    #[test]
    fn hop_keyframes_are_reproduced(seed in any::<u64>()) {
        let p = RobotParams::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, traj) = random_hop(&mut rng, &p);
        prop_assert!(traj.keyframe_residual() <= 1e-8);
    }

    #[test]
    fn extras_never_move_keyframes(seed in any::<u64>(), frac in 0.2f64..0.8, offset in -0.5f64..0.5, k in 0usize..3, j in 0usize..4) {
        let p = RobotParams::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (req, base) = random_hop(&mut rng, &p);
        let t_e = frac * base.t1;
        let value = base.evaluate(t_e, j, k).unwrap() + offset;
        let req = HopRequest { extras: vec![ExtraConstraint { t: t_e, output: j, k, value }], ..req };
        let shaped = generate(req.ty, base.keyframes, 2, &req.extras, req.drag_comp, None).unwrap();
        for (a, b) in keyframe_values(&base).iter().zip(keyframe_values(&shaped).iter()) {
            prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        }
        prop_assert!((shaped.evaluate(t_e, j, k).unwrap() - value).abs() <= 1e-8);
    }
}
