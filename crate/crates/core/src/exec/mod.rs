//! Program execution against a simulated workcell: sequences, I/O, waits,
//! guarded moves with retries, error signaling and recovery, and tracing.

pub mod actions;
mod advmove;
pub(crate) mod controller;
pub mod trace;

pub use actions::{ActionCall, ActionFn, ActionRegistry};
pub use advmove::{evaluate_query, perturbation_offset, AttemptContext, AttemptOutcome};
pub use controller::{
    run_program, Abort, Controller, RunOptions, RunResult, RunStats, RunStatus, SequenceResume, DEFAULT_MAX_CALL_DEPTH,
    DEFAULT_MAX_INSTRUCTIONS, DEFAULT_MAX_RESUME_RETRIES,
};
pub use trace::{
    read_trace, Event, JsonlSink, MemorySink, NullSink, StackEntry, TraceEvent, TraceReadError, TraceSink,
};
