//! Fixtures shared by the benchmarks: the shipped programs and workcells.

use std::path::PathBuf;

use adsl_core::{parse_program, Program, WorkcellConfig};

pub fn asset_text(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn program(name: &str) -> Program {
    parse_program(&asset_text(name)).expect("shipped program parses")
}

pub fn workcell(name: &str) -> WorkcellConfig {
    WorkcellConfig::from_json(&asset_text(name)).expect("shipped workcell loads")
}
