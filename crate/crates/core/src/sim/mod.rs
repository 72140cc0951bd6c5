//! Kinematic workcell: robot motion, obstacles with apertures, a noisy
//! force sensor with a running-average filter, and digital I/O.

pub mod config;
pub mod geometry;
pub mod kinematics;
pub mod workcell;

pub use config::{ConfigError, SpeedMap, WorkcellConfig};
pub use geometry::{Axis, BitCondition, Contact, Hole, Obstacle};
pub use kinematics::{CartesianKinematics, Joints, Kinematics, Pose};
pub use workcell::{SensorReading, SimError, StepOutcome, Workcell, WorkcellState};
