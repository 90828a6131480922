//! Per-output factorizations keyed on `(type, output, t1, t2, n*)`.
//!
//! The constraint matrices depend only on the keyframe times and the type,
//! so hops that reuse a trajectory duration can skip the factorization.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use super::system::{constraint_matrix, constraint_rows, null_basis_from, BaseSolver};
use super::TrajectoryType;
use crate::error::TrajectoryError;

/// Factorized base system and null-space basis for one output.
#[derive(Debug, Clone)]
pub struct OutputSystem {
    /// Base polynomial order.
    pub n: usize,
    pub solver: BaseSolver,
    /// Keyframe constraints as `(t, derivative)` pairs.
    pub rows: Vec<(f64, usize)>,
    pub null_basis: Option<DMatrix<f64>>,
}

impl OutputSystem {
    pub fn build(ty: TrajectoryType, output: usize, t1: f64, t2: f64, n_star: usize) -> Result<Self, TrajectoryError> {
        let rows = constraint_rows(ty, output, [0.0, t1, t2]);
        let solver = BaseSolver::new(&constraint_matrix(&rows, rows.len()))?;
        let null_basis = if n_star > 0 { Some(null_basis_from(&solver, &rows, n_star)?) } else { None };
        Ok(Self { n: rows.len() - 1, solver, rows, null_basis })
    }
}

type Key = (TrajectoryType, usize, u64, u64, usize);

/// Thread-safe cache of [`OutputSystem`]s.
#[derive(Debug, Default)]
pub struct SystemCache {
    map: Mutex<HashMap<Key, Arc<OutputSystem>>>,
    capacity: usize,
}

impl SystemCache {
    pub const DEFAULT_CAPACITY: usize = 1024;

    pub fn new() -> Self {
        Self::with_capacity(Self::DEFAULT_CAPACITY)
    }

    /// The cache is flushed whenever it would exceed `capacity` entries.
    pub fn with_capacity(capacity: usize) -> Self {
        Self { map: Mutex::new(HashMap::new()), capacity: capacity.max(1) }
    }

    pub fn get(
        &self,
        ty: TrajectoryType,
        output: usize,
        t1: f64,
        t2: f64,
        n_star: usize,
    ) -> Result<Arc<OutputSystem>, TrajectoryError> {
        let key = (ty, output, t1.to_bits(), t2.to_bits(), n_star);
        if let Some(hit) = self.lock().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(OutputSystem::build(ty, output, t1, t2, n_star)?);
        let mut map = self.lock();
        if map.len() >= self.capacity {
            map.clear();
        }
        map.insert(key, Arc::clone(&built));
        Ok(built)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.lock().clear();
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<Key, Arc<OutputSystem>>> {
        // a panic while holding the lock cannot leave a half-inserted entry
        self.map.lock().unwrap_or_else(|e| e.into_inner())
    }
}
