//! Reverse execution. Every forward instruction leaves an undo entry with
//! the state it started from; reversal walks these entries newest first,
//! running each one's counterpart.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::actions::ActionRegistry;
use crate::exec::controller::{abort, Abort, Controller, FrameState};
use crate::exec::trace::Event;
use crate::model::*;
use crate::sim::Joints;
use crate::syntax::{format_instr_kind, format_number};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReversibilityClass {
    AlwaysReversible,
    /// Reversible only after forward execution, using the recorded pose.
    KinematicReversible,
    NeverReversible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    DepthReached,
    Barrier,
    TraceStart,
    NeverReversibleHit,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::DepthReached => "DepthReached",
            StopReason::Barrier => "Barrier",
            StopReason::TraceStart => "TraceStart",
            StopReason::NeverReversibleHit => "NeverReversibleHit",
        })
    }
}

pub fn classify(instr: &Instruction, actions: &ActionRegistry) -> ReversibilityClass {
    use ReversibilityClass::*;
    match &instr.annotation {
        Some(ReversibilityAnnotation::NonReversible) => return NeverReversible,
        Some(ReversibilityAnnotation::ReverseWith(_)) => return AlwaysReversible,
        _ => {}
    }
    match &instr.kind {
        InstrKind::Io(_) | InstrKind::Wait(_) => AlwaysReversible,
        InstrKind::MoveJoint(_) | InstrKind::AdvMove(_) | InstrKind::SeqCall(_) => KinematicReversible,
        InstrKind::Call { action, .. } if actions.has_reverse(action) => AlwaysReversible,
        InstrKind::Call { .. } => NeverReversible,
    }
}

/// One executed instruction as reversal sees it.
#[derive(Debug, Clone)]
pub struct UndoUnit<'p> {
    /// Trace index of the forward `InstrBegin`.
    pub begin: u64,
    pub instr: &'p Instruction,
    /// Effective class, inherited `@nonreversible` included.
    pub class: ReversibilityClass,
    pub skip: bool,
    pub barrier: bool,
    pub pre_joints: Joints,
    pub pre_io: Vec<bool>,
    /// Active speed when the instruction began.
    pub speed: SpeedLevel,
    pub(crate) resume_stack: Vec<FrameState<'p>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Counterpart<'p> {
    Noop,
    Io(Vec<Primitive>),
    Wait(f64),
    MoveTo(Joints),
    ReverseAction { action: &'p str, items: &'p [String] },
    Forward(&'p InstrKind),
}

impl fmt::Display for Counterpart<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Counterpart::Noop => f.write_str("noop"),
            Counterpart::Io(prims) => {
                let parts: Vec<String> = prims
                    .iter()
                    .map(|p| match p {
                        Primitive::SetLow => "set_low".to_string(),
                        Primitive::SetHigh => "set_high".to_string(),
                        Primitive::SelectBit(b) => format!("bit {b}"),
                        Primitive::Sleep(t) => format!("sleep {}", format_number(*t)),
                    })
                    .collect();
                write!(f, "io {{{}}}", parts.join("; "))
            }
            Counterpart::Wait(t) => write!(f, "wait {}", format_number(*t)),
            Counterpart::MoveTo(j) => {
                let vals: Vec<String> = j.iter().map(|v| format_number(*v)).collect();
                write!(f, "move to {{{}}}", vals.join(", "))
            }
            Counterpart::ReverseAction { action, items } => {
                write!(f, "reverse call \"{action}\" ({})", items.join(" "))
            }
            Counterpart::Forward(kind) => f.write_str(&format_instr_kind(kind)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("instruction at trace index {0} is not reversible")]
pub struct NotReversible(pub u64);

/// Writes that restore each touched bit to its value before the operation,
/// last write first, each followed by the sleeps that followed it forward.
pub fn io_counterpart(prims: &[Primitive], pre_io: &[bool]) -> Vec<Primitive> {
    let mut bits = pre_io.to_vec();
    let mut level = None;
    let mut groups: Vec<Vec<Primitive>> = vec![Vec::new()];
    for p in prims {
        match p {
            Primitive::SetLow => level = Some(false),
            Primitive::SetHigh => level = Some(true),
            Primitive::SelectBit(b) => {
                let i = *b as usize;
                let before = bits.get(i).copied().unwrap_or(false);
                if let (Some(l), Some(slot)) = (level.take(), bits.get_mut(i)) {
                    *slot = l;
                }
                let restore = if before { Primitive::SetHigh } else { Primitive::SetLow };
                groups.push(vec![restore, Primitive::SelectBit(*b)]);
            }
            Primitive::Sleep(t) => groups.last_mut().expect("group").push(Primitive::Sleep(*t)),
        }
    }
    let leading = groups.remove(0);
    let mut out: Vec<Primitive> = groups.into_iter().rev().flatten().collect();
    out.extend(leading);
    out
}

pub fn reverse_counterpart<'p>(unit: &UndoUnit<'p>, program: &'p Program) -> Result<Counterpart<'p>, NotReversible> {
    if unit.skip {
        return Ok(Counterpart::Noop);
    }
    if unit.class == ReversibilityClass::NeverReversible {
        return Err(NotReversible(unit.begin));
    }
    if let Some(ReversibilityAnnotation::ReverseWith(kind)) = &unit.instr.annotation {
        return Ok(Counterpart::Forward(kind));
    }
    Ok(match &unit.instr.kind {
        InstrKind::Io(name) => match program.io_op(name) {
            Some(op) => Counterpart::Io(io_counterpart(&op.primitives, &unit.pre_io)),
            None => return Err(NotReversible(unit.begin)),
        },
        InstrKind::Wait(t) => Counterpart::Wait(*t),
        InstrKind::MoveJoint(_) | InstrKind::AdvMove(_) | InstrKind::SeqCall(_) => Counterpart::MoveTo(unit.pre_joints),
        InstrKind::Call { action, items } => Counterpart::ReverseAction { action, items },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep<'p> {
    /// Trace index of the forward instruction undone by this step.
    pub index: u64,
    pub counterpart: Counterpart<'p>,
    /// Speed restored before the step ran.
    pub speed: SpeedLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversePlan<'p> {
    pub steps: Vec<PlanStep<'p>>,
    pub stop: StopReason,
    /// State recorded before the earliest undone instruction; `None` when
    /// nothing was undone.
    pub restored_joints: Option<Joints>,
    pub restored_io: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolicyMode {
    #[default]
    Linear,
    Exponential,
}

/// How far to reverse on the k-th occurrence of an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResumePolicy {
    pub mode: PolicyMode,
    pub base_depth: usize,
    /// Occurrences after which a reversal stopped by a barrier or an
    /// irreversible instruction aborts the run.
    pub max_occurrences: u32,
}

impl Default for ResumePolicy {
    fn default() -> Self {
        ResumePolicy { mode: PolicyMode::Linear, base_depth: 1, max_occurrences: 5 }
    }
}

impl ResumePolicy {
    /// Depth for occurrence `k` (1-based).
    pub fn depth(&self, k: u32) -> usize {
        let k = k.max(1);
        match self.mode {
            PolicyMode::Linear => self.base_depth.saturating_mul(k as usize),
            PolicyMode::Exponential => {
                let factor = 1usize.checked_shl(k - 1).unwrap_or(usize::MAX);
                self.base_depth.saturating_mul(factor)
            }
        }
    }
}

impl<'p> Controller<'p> {
    /// Undoes up to `depth` executed instructions, or all of them for
    /// `None`, newest first.
    pub fn reverse(&mut self, depth: Option<usize>) -> Result<ReversePlan<'p>, Abort> {
        self.reverse_walk(depth, None).map(|(plan, _)| plan)
    }

    fn reverse_walk(
        &mut self,
        depth: Option<usize>,
        error: Option<&str>,
    ) -> Result<(ReversePlan<'p>, Option<Vec<FrameState<'p>>>), Abort> {
        self.emit(Event::ReverseBegin { depth, error: error.map(str::to_string) })?;
        let was_reversing = std::mem::replace(&mut self.reversing, true);
        let mut steps = Vec::new();
        let mut earliest: Option<UndoUnit<'p>> = None;
        let stop = loop {
            if depth.is_some_and(|d| steps.len() >= d) {
                break StopReason::DepthReached;
            }
            let Some(unit) = self.undo.last() else {
                break StopReason::TraceStart;
            };
            if unit.barrier {
                break StopReason::Barrier;
            }
            // a skipped unit is passed over whatever its class
            if unit.class == ReversibilityClass::NeverReversible && !unit.skip {
                break StopReason::NeverReversibleHit;
            }
            let unit = self.undo.pop().expect("unit");
            let cp = match reverse_counterpart(&unit, self.program) {
                Ok(cp) => cp,
                Err(e) => return abort(e.to_string()),
            };
            self.set_speed(unit.speed)?;
            self.exec_counterpart(&cp, unit.begin, unit.class)?;
            steps.push(PlanStep { index: unit.begin, counterpart: cp, speed: unit.speed });
            earliest = Some(unit);
        };
        self.reversing = was_reversing;
        self.stats.reversals += 1;
        self.emit(Event::ReverseEnd { stop, steps: steps.iter().map(|s| s.index).collect() })?;
        let plan = ReversePlan {
            steps,
            stop,
            restored_joints: earliest.as_ref().map(|u| u.pre_joints),
            restored_io: earliest.as_ref().map(|u| u.pre_io.clone()),
        };
        Ok((plan, earliest.map(|u| u.resume_stack)))
    }
}

/// Recovery for errors without a recovery sequence: reverse progressively
/// further on each occurrence, then resume at the earliest undone
/// instruction.
pub(crate) fn recover_by_reversal<'p>(
    ctl: &mut Controller<'p>,
    error: &'p ErrorSpec,
    location: Vec<FrameState<'p>>,
) -> Result<(), Abort> {
    let k = ctl.error_count(&error.name);
    let depth = ctl.options.policy.depth(k);
    let (plan, resume) = ctl.reverse_walk(Some(depth), Some(&error.name))?;
    let saturated = matches!(plan.stop, StopReason::Barrier | StopReason::NeverReversibleHit);
    let streak = ctl.saturations.entry(error.name.clone()).or_insert(0);
    *streak = if saturated { *streak + 1 } else { 0 };
    if saturated && (*streak >= 2 || k > ctl.options.policy.max_occurrences) {
        return abort(format!("reversal for error `{}` cannot make progress ({})", error.name, plan.stop));
    }
    ctl.restore_stack(resume.unwrap_or(location))
}
