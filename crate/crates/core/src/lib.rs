//! Trajectory generation and tracking control for a hopping quadrotor.

pub mod bench;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod flatness;
pub mod hop_cycle;
pub mod params;
pub mod sim;
pub mod trajectory;

pub use dynamics::{ControlInput, State12};
pub use error::{DynamicsError, FlatnessError, HopError, ParamsError, SimError, TrajectoryError};
pub use params::RobotParams;
