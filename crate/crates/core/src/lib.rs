//! Assembly programming language for robot workcells: a textual DSL with
//! parser and validator, a kinematic workcell simulation, an error-aware
//! execution controller and a reverse-execution engine.

pub mod exec;
pub mod model;
pub mod reverse;
pub mod sim;
pub mod syntax;
pub mod validate;

pub use exec::{run_program, Controller, Event, RunOptions, RunResult, RunStatus, SequenceResume, TraceEvent};
pub use model::Program;
pub use reverse::{PolicyMode, ResumePolicy, ReversePlan, ReversibilityClass, StopReason};
pub use sim::{Pose, Workcell, WorkcellConfig};
pub use syntax::{parse_program, pretty_print, ParseError};
pub use validate::{validate_program, ValidationReport};
