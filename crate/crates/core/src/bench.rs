//! Latency of hop trajectory generation.

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{euler_to_rotation, State12};
use crate::error::TrajectoryError;
use crate::params::RobotParams;
use crate::trajectory::{make_hop_trajectory, make_hop_trajectory_cached, HopRequest, SystemCache, TouchdownSpec, TrajectoryType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub ty: TrajectoryType,
    pub cached: bool,
    pub iterations: usize,
    pub median_ns: u64,
    pub p99_ns: u64,
}

/// The benchmark hop: liftoff pitched 30° at 5 m/s, touchdown pitched −30°
/// at 5 m/s after 1.75 s with a 50 ms reorientation lead.
pub fn bench_request(ty: TrajectoryType) -> HopRequest {
    let l = 0.2;
    let euler = Vector3::new(0.0, 30f64.to_radians(), 0.0);
    let z_b = euler_to_rotation(&euler).expect("level enough").column(2).into_owned();
    let lo = State12::new(l * z_b, 5.0 * z_b, euler, Vector3::zeros());
    let td_euler = Vector3::new(0.0, -30f64.to_radians(), 0.0);
    let z_td = euler_to_rotation(&td_euler).expect("level enough").column(2).into_owned();
    let position = match ty {
        TrajectoryType::T1 => [None, None, Some(l * z_td[2])],
        TrajectoryType::T2 => [Some(2.0), Some(0.0), None],
        TrajectoryType::T3 => [Some(2.0), Some(0.0), Some(l * z_td[2])],
    };
    HopRequest::new(lo, ty, TouchdownSpec { position, euler: td_euler, v_td: 5.0, u1_td: None }, 1.75, 0.05)
}

fn percentile(sorted: &[u64], q: f64) -> u64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Times `iterations` generations per trajectory type. Uncached runs build
/// every factorization from scratch; cached runs share one [`SystemCache`].
pub fn bench_hop_generation(params: &RobotParams, iterations: usize, cached: bool) -> Result<Vec<BenchResult>, TrajectoryError> {
    let iterations = iterations.max(1);
    let cache = SystemCache::new();
    let mut out = Vec::new();
    for ty in TrajectoryType::ALL {
        let req = bench_request(ty);
        // warm-up, also surfaces request errors once
        for _ in 0..iterations.min(10) {
            std::hint::black_box(make_hop_trajectory_cached(params, &req, cached.then_some(&cache))?);
        }
        let mut samples = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let start = Instant::now();
            let traj = if cached {
                make_hop_trajectory_cached(params, std::hint::black_box(&req), Some(&cache))
            } else {
                make_hop_trajectory(params, std::hint::black_box(&req))
            };
            let elapsed = start.elapsed().as_nanos() as u64;
            std::hint::black_box(traj?);
            samples.push(elapsed);
        }
        samples.sort_unstable();
        out.push(BenchResult {
            ty,
            cached,
            iterations,
            median_ns: percentile(&samples, 0.5),
            p99_ns: percentile(&samples, 0.99),
        });
    }
    Ok(out)
}
