#![allow(dead_code)]

use std::path::PathBuf;

use adsl_core::exec::{Controller, MemorySink, RunOptions, RunResult, TraceEvent};
use adsl_core::model::Program;
use adsl_core::sim::{Joints, WorkcellConfig};
use adsl_core::{parse_program, validate_program};

pub const START: Joints = [3.425, -1.0, 0.5, 0.0, 0.0, 0.0];
pub const HANDLE: Joints = [3.379, -1.2, 0.5, 0.0, 0.0, 0.0];

pub fn asset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(name)
}

pub fn read_asset(name: &str) -> String {
    std::fs::read_to_string(asset(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Parses and validates; panics on any problem.
pub fn program(text: &str) -> Program {
    let p = parse_program(text).unwrap_or_else(|e| panic!("{e}"));
    let report = validate_program(&p);
    assert!(report.is_empty(), "{:?}", report.iter().map(|d| d.to_string()).collect::<Vec<_>>());
    p
}

pub fn corpus() -> Program {
    program(&read_asset("peg_in_hole.adsl"))
}

pub fn config(name: &str) -> WorkcellConfig {
    WorkcellConfig::from_json(&read_asset(name)).unwrap()
}

pub fn run(program: &Program, config: WorkcellConfig, options: RunOptions) -> (RunResult, Vec<TraceEvent>) {
    let mut sink = MemorySink::default();
    let result = Controller::new(program, config, options, &mut sink).run();
    (result, sink.events)
}

pub fn kinds<'a>(events: &'a [TraceEvent], kind: &str) -> Vec<&'a TraceEvent> {
    events.iter().filter(|e| e.event.kind() == kind).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
