//! Scenario-driven multi-hop simulation: generate, track, touch down,
//! stance, regenerate.

mod log;
mod report;
mod run;
mod scenario;

pub use log::{csv_header, HopRecord, TickRecord, TouchdownKind, TrajectoryLog, CSV_COLUMNS};
pub use report::{rmse, write_plot_data, write_run, HopRmse, RmseReport};
pub use run::{
    compare_drag, compare_drag_runs, run_parallel, run_scenario, run_scenario_partial, run_scenario_with, worker_threads, DragComparison,
    RunOptions, RunOutput, THREADS_ENV,
};
pub use scenario::{GammaSettings, HopPlan, InitialState, Perturbation, Scenario};
