//! Execution trace: one record per event, written as newline-delimited JSON.
//!
//! Every record carries the joints and I/O bits before and after it. The
//! `pre` values of a record always equal the `post` values of the record
//! before it, so a trace alone replays the full state history.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SpeedLevel;
use crate::reverse::{ReversibilityClass, StopReason};
use crate::sim::Joints;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackEntry {
    pub sequence: String,
    pub pc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data")]
pub enum Event {
    InstrBegin {
        instr: String,
        class: ReversibilityClass,
        /// Set on counterparts executed during reversal: index of the
        /// forward `InstrBegin` being undone.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reverse_of: Option<u64>,
    },
    InstrEnd {
        begin: u64,
    },
    MotionSample {
        advanced: f64,
        contact: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        filtered: Option<f64>,
    },
    IoWrite {
        bit: usize,
        level: bool,
    },
    ErrorSignaled {
        error: String,
        occurrence: u32,
    },
    RecoveryBegin {
        error: String,
        sequence: String,
    },
    RecoveryEnd {
        error: String,
        sequence: String,
    },
    AttemptBegin {
        adv_move: String,
        attempt: u32,
    },
    AttemptEnd {
        adv_move: String,
        attempt: u32,
        covered: f64,
        filtered: f64,
        guard_tripped: bool,
        success: bool,
        failed: Vec<String>,
    },
    SettingChange {
        from: SpeedLevel,
        to: SpeedLevel,
    },
    ReverseBegin {
        /// `None` requests a full-depth reversal.
        depth: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    ReverseEnd {
        stop: StopReason,
        steps: Vec<u64>,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::InstrBegin { .. } => "InstrBegin",
            Event::InstrEnd { .. } => "InstrEnd",
            Event::MotionSample { .. } => "MotionSample",
            Event::IoWrite { .. } => "IoWrite",
            Event::ErrorSignaled { .. } => "ErrorSignaled",
            Event::RecoveryBegin { .. } => "RecoveryBegin",
            Event::RecoveryEnd { .. } => "RecoveryEnd",
            Event::AttemptBegin { .. } => "AttemptBegin",
            Event::AttemptEnd { .. } => "AttemptEnd",
            Event::SettingChange { .. } => "SettingChange",
            Event::ReverseBegin { .. } => "ReverseBegin",
            Event::ReverseEnd { .. } => "ReverseEnd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    pub event: Event,
    pub clock: f64,
    pub stack: Vec<StackEntry>,
    pub speed: SpeedLevel,
    pub pre_joints: Joints,
    pub post_joints: Joints,
    #[serde(with = "bit_string")]
    pub pre_io: Vec<bool>,
    #[serde(with = "bit_string")]
    pub post_io: Vec<bool>,
}

impl TraceEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace events serialize")
    }
}

/// I/O bits as a string of `0` and `1`, bit 0 first.
mod bit_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let text: String = bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(D::Error::custom(format!("invalid bit character `{other}`"))),
            })
            .collect()
    }
}

/// Destination for trace events.
pub trait TraceSink {
    fn record(&mut self, event: &TraceEvent) -> io::Result<()>;

    /// Sinks that discard events let the controller skip building them.
    fn enabled(&self) -> bool {
        true
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceEvent) -> io::Result<()> {
        Ok(())
    }

    fn enabled(&self) -> bool {
        false
    }
}

#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub events: Vec<TraceEvent>,
}

impl TraceSink for MemorySink {
    fn record(&mut self, event: &TraceEvent) -> io::Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for JsonlSink<W> {
    fn record(&mut self, event: &TraceEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, event)?;
        self.out.write_all(b"\n")
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

#[derive(Debug, Error)]
pub enum TraceReadError {
    #[error("trace: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceEvent>, TraceReadError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|source| TraceReadError::Json { line: i + 1, source })?;
        events.push(ev);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TraceEvent {
        TraceEvent {
            index: 7,
            event: Event::MotionSample {
                advanced: 0.1 + 0.2,
                contact: true,
                raw: Some(50.123),
                filtered: Some(-1e-300),
            },
            clock: 0.008 * 3.0,
            stack: vec![StackEntry { sequence: "main".into(), pc: 2 }],
            speed: SpeedLevel::VerySlow,
            pre_joints: [3.425, -1.0, 0.5, 0.0, -0.0, f64::MIN_POSITIVE],
            post_joints: [1.0 / 3.0; 6],
            pre_io: vec![true, false, false],
            post_io: vec![false, false, true],
        }
    }

    #[test]
    fn json_line_round_trips_bit_exact() {
        let ev = sample();
        let line = ev.to_json_line();
        assert!(line.starts_with(r#"{"index":7,"event":{"kind":"MotionSample","#), "{line}");
        assert!(line.contains(r#""pre_io":"100""#));
        assert!(line.contains(r#""speed":"very_slow""#));
        let back: TraceEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ev);
        for (a, b) in back.post_joints.iter().zip(ev.post_joints) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.pre_joints[4].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn jsonl_reader_reads_writer_output() {
        let mut sink = JsonlSink::new(Vec::new());
        let mut ev = sample();
        sink.record(&ev).unwrap();
        ev.index = 8;
        ev.event = Event::ReverseEnd { stop: StopReason::Barrier, steps: vec![5, 3] };
        sink.record(&ev).unwrap();
        let bytes = sink.into_inner();
        let events = read_trace(bytes.as_slice()).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1], ev);
        assert_eq!(events[1].event.kind(), "ReverseEnd");
    }

    #[test]
    fn bad_bit_string_rejected() {
        let line = sample().to_json_line().replace(r#""pre_io":"100""#, r#""pre_io":"1x0""#);
        assert!(read_trace(line.as_bytes()).is_err());
    }
}
