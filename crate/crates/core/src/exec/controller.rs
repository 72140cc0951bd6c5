use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::actions::{ActionCall, ActionRegistry};
use super::trace::{Event, NullSink, StackEntry, TraceEvent, TraceSink};
use crate::model::*;
use crate::reverse::{classify, Counterpart, ResumePolicy, ReversibilityClass, UndoUnit};
use crate::sim::{Joints, Pose, Workcell, WorkcellConfig};
use crate::syntax::format_instruction;

pub const DEFAULT_MAX_CALL_DEPTH: usize = 32;
pub const DEFAULT_MAX_RESUME_RETRIES: u32 = 5;
pub const DEFAULT_MAX_INSTRUCTIONS: u64 = 1_000_000;

/// How `return_to sequence` picks the resume point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SequenceResume {
    /// Start the enclosing sequence over.
    #[default]
    Restart,
    /// Continue with the instruction after the one that signaled.
    Resume,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the workcell's `rng_seed` when set.
    pub seed: Option<u64>,
    pub sequence_resume: SequenceResume,
    pub policy: ResumePolicy,
    pub max_call_depth: usize,
    /// Signals of one error at one instruction tolerated before aborting.
    pub max_resume_retries: u32,
    pub max_instructions: u64,
    pub actions: ActionRegistry,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: None,
            sequence_resume: SequenceResume::Restart,
            policy: ResumePolicy::default(),
            max_call_depth: DEFAULT_MAX_CALL_DEPTH,
            max_resume_retries: DEFAULT_MAX_RESUME_RETRIES,
            max_instructions: DEFAULT_MAX_INSTRUCTIONS,
            actions: ActionRegistry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub instructions: u64,
    pub errors: u64,
    pub recoveries: u64,
    pub reversals: u64,
    pub sim_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    pub stats: RunStats,
    pub seed: u64,
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Reason a run cannot continue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abort(pub String);

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn abort<T>(msg: impl Into<String>) -> Result<T, Abort> {
    Err(Abort(msg.into()))
}

/// Reversal annotations inherited from enclosing sequence calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct Flags {
    pub nonreversible: bool,
    pub skip: bool,
    pub barrier: bool,
    /// Inside a call reversed as a whole by `@reverse_with`.
    pub opaque: bool,
}

impl Flags {
    pub fn with(self, annotation: &Option<ReversibilityAnnotation>) -> Flags {
        let mut f = self;
        match annotation {
            Some(ReversibilityAnnotation::NonReversible) => f.nonreversible = true,
            Some(ReversibilityAnnotation::SkipOnReverse) => f.skip = true,
            Some(ReversibilityAnnotation::Barrier) => f.barrier = true,
            Some(ReversibilityAnnotation::ReverseWith(_)) | None => {}
        }
        f
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CallSite<'p> {
    pub instr: &'p Instruction,
    pub begin: u64,
    pub pre_joints: Joints,
    pub pre_io: Vec<bool>,
    pub speed: SpeedLevel,
}

#[derive(Debug, Clone)]
pub(crate) struct FrameState<'p> {
    pub seq: &'p Sequence,
    /// Instruction currently executing, or next to execute.
    pub pc: usize,
    /// The `seq` instruction that entered this frame; `None` for the entry
    /// sequence and for recovery sequences.
    pub call: Option<CallSite<'p>>,
    pub flags: Flags,
}

fn same_frame(a: &FrameState<'_>, b: &FrameState<'_>) -> bool {
    std::ptr::eq(a.seq, b.seq) && a.call.as_ref().map(|c| c.begin) == b.call.as_ref().map(|c| c.begin)
}

fn location_key(frames: &[FrameState<'_>]) -> Vec<(String, usize)> {
    frames.iter().map(|f| (f.seq.name.clone(), f.pc)).collect()
}

pub(crate) struct Pending<'p> {
    pub error: &'p ErrorSpec,
    /// Stack at the moment of signaling; the top frame points at the
    /// signaling instruction.
    pub location: Vec<FrameState<'p>>,
}

/// Interprets one program against one workcell.
pub struct Controller<'p> {
    pub(crate) program: &'p Program,
    pub(crate) workcell: Workcell,
    pub(crate) rng: ChaCha8Rng,
    sink: &'p mut dyn TraceSink,
    pub(crate) options: RunOptions,
    pub(crate) frames: Vec<FrameState<'p>>,
    pending: Option<Pending<'p>>,
    signaled: bool,
    pub(crate) error_counts: BTreeMap<String, u32>,
    loop_guard: BTreeMap<(Vec<(String, usize)>, String), u32>,
    pub(crate) saturations: BTreeMap<String, u32>,
    pub(crate) active_speed: SpeedLevel,
    in_recovery: bool,
    recovery_resume: Option<Vec<FrameState<'p>>>,
    pub(crate) reversing: bool,
    pub(crate) undo: Vec<UndoUnit<'p>>,
    pub(crate) stats: RunStats,
    next_index: u64,
    last_post: (Joints, Vec<bool>),
    log: Vec<String>,
    seed: u64,
}

impl<'p> Controller<'p> {
    pub fn new(program: &'p Program, config: WorkcellConfig, options: RunOptions, sink: &'p mut dyn TraceSink) -> Self {
        let seed = options.seed.unwrap_or(config.rng_seed);
        let workcell = Workcell::new(config);
        let last_post = (workcell.joints(), workcell.io_bits().to_vec());
        Controller {
            program,
            workcell,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sink,
            options,
            frames: Vec::new(),
            pending: None,
            signaled: false,
            error_counts: BTreeMap::new(),
            loop_guard: BTreeMap::new(),
            saturations: BTreeMap::new(),
            active_speed: SpeedLevel::default(),
            in_recovery: false,
            recovery_resume: None,
            reversing: false,
            undo: Vec::new(),
            stats: RunStats::default(),
            next_index: 0,
            last_post,
            log: Vec::new(),
            seed,
        }
    }

    pub fn workcell(&self) -> &Workcell {
        &self.workcell
    }

    pub fn active_speed(&self) -> SpeedLevel {
        self.active_speed
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    pub fn stats(&self) -> RunStats {
        RunStats { sim_time: self.workcell.clock(), ..self.stats }
    }

    pub(crate) fn pending_error(&self) -> Option<&str> {
        self.pending.as_ref().map(|p| p.error.name.as_str())
    }

    pub fn error_count(&self, name: &str) -> u32 {
        self.error_counts.get(name).copied().unwrap_or(0)
    }

    /// Undo entries available to reversal, oldest first.
    pub fn undo_log(&self) -> &[UndoUnit<'p>] {
        &self.undo
    }

    /// Executes the entry sequence to completion or abort.
    pub fn run(&mut self) -> RunResult {
        let mut status = match self.run_inner() {
            Ok(()) => RunStatus::Completed,
            Err(Abort(reason)) => RunStatus::Aborted(reason),
        };
        if let Err(e) = self.sink.flush() {
            if status == RunStatus::Completed {
                status = RunStatus::Aborted(format!("trace write failed: {e}"));
            }
        }
        RunResult { status, stats: self.stats(), seed: self.seed }
    }

    fn run_inner(&mut self) -> Result<(), Abort> {
        let Some(entry) = self.program.entry_name() else {
            return abort("program has no entry sequence");
        };
        let Some(seq) = self.program.sequence(entry) else {
            return abort(format!("entry sequence `{entry}` not found"));
        };
        self.frames.push(FrameState { seq, pc: 0, call: None, flags: Flags::default() });
        self.drive(0)
    }

    pub(crate) fn emit(&mut self, event: Event) -> Result<u64, Abort> {
        let index = self.next_index;
        self.next_index += 1;
        if !self.sink.enabled() {
            return Ok(index);
        }
        let post_joints = self.workcell.joints();
        let post_io = self.workcell.io_bits().to_vec();
        let (pre_joints, pre_io) = std::mem::replace(&mut self.last_post, (post_joints, post_io.clone()));
        let ev = TraceEvent {
            index,
            event,
            clock: self.workcell.clock(),
            stack: self.frames.iter().map(|f| StackEntry { sequence: f.seq.name.clone(), pc: f.pc }).collect(),
            speed: self.active_speed,
            pre_joints,
            post_joints,
            pre_io,
            post_io,
        };
        self.sink.record(&ev).map_err(|e| Abort(format!("trace write failed: {e}")))?;
        Ok(index)
    }

    pub(crate) fn set_speed(&mut self, level: SpeedLevel) -> Result<(), Abort> {
        if level != self.active_speed {
            let from = self.active_speed;
            self.active_speed = level;
            self.emit(Event::SettingChange { from, to: level })?;
        }
        Ok(())
    }

    /// Runs frames until the stack is no deeper than `floor`.
    pub(crate) fn drive(&mut self, floor: usize) -> Result<(), Abort> {
        while self.frames.len() > floor {
            let top = self.frames.len() - 1;
            let (seq, pc) = (self.frames[top].seq, self.frames[top].pc);
            if pc >= seq.instructions.len() {
                if self.pending.as_ref().is_some_and(|p| {
                    p.error.respond_after == RespondAfter::CurrentSequence && p.location.len() == top + 1
                }) {
                    self.handle_pending()?;
                } else {
                    self.finish_frame()?;
                }
                continue;
            }
            self.stats.instructions += 1;
            if self.stats.instructions > self.options.max_instructions {
                return abort(format!("instruction budget of {} exhausted", self.options.max_instructions));
            }
            let instr = &seq.instructions[pc];
            match &instr.kind {
                InstrKind::SeqCall(name) => self.enter_call(instr, name)?,
                _ => self.exec_leaf(instr)?,
            }
        }
        Ok(())
    }

    fn push_frame(&mut self, frame: FrameState<'p>) -> Result<(), Abort> {
        if self.frames.len() >= self.options.max_call_depth {
            return abort(format!("call depth limit of {} exceeded", self.options.max_call_depth));
        }
        self.frames.push(frame);
        Ok(())
    }

    fn enter_call(&mut self, instr: &'p Instruction, name: &str) -> Result<(), Abort> {
        let Some(seq) = self.program.sequence(name) else {
            return abort(format!("unresolved sequence `{name}`"));
        };
        let parent = self.frames.last().map(|f| f.flags).unwrap_or_default();
        let mut flags = parent.with(&instr.annotation);
        flags.opaque |= matches!(instr.annotation, Some(ReversibilityAnnotation::ReverseWith(_)));
        let call = self.begin_call_site(instr)?;
        self.push_frame(FrameState { seq, pc: 0, call: Some(call), flags })
    }

    fn begin_call_site(&mut self, instr: &'p Instruction) -> Result<CallSite<'p>, Abort> {
        let pre_joints = self.workcell.joints();
        let pre_io = self.workcell.io_bits().to_vec();
        let class = classify(instr, &self.options.actions);
        let text = if self.sink.enabled() { format_instruction(instr) } else { String::new() };
        let begin = self.emit(Event::InstrBegin { instr: text, class, reverse_of: None })?;
        Ok(CallSite { instr, begin, pre_joints, pre_io, speed: self.active_speed })
    }

    fn finish_frame(&mut self) -> Result<(), Abort> {
        let frame = self.frames.pop().expect("frame to finish");
        let Some(call) = frame.call else {
            return Ok(());
        };
        self.emit(Event::InstrEnd { begin: call.begin })?;
        let parent_opaque = self.frames.last().is_some_and(|f| f.flags.opaque);
        if frame.flags.opaque && !parent_opaque {
            // the whole call is one undo entry
            let resume_stack = self.resume_stack();
            let flags = self.frames.last().map(|f| f.flags).unwrap_or_default().with(&call.instr.annotation);
            self.push_undo(call.instr, call.begin, flags, call.pre_joints, call.pre_io, call.speed, resume_stack);
        }
        if let Some(parent) = self.frames.last_mut() {
            parent.pc += 1;
        }
        Ok(())
    }

    /// Where forward execution continues if the instruction at the top of
    /// the stack is undone.
    fn resume_stack(&self) -> Vec<FrameState<'p>> {
        match &self.recovery_resume {
            Some(loc) if self.in_recovery => loc.clone(),
            _ => self.frames.clone(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push_undo(
        &mut self,
        instr: &'p Instruction,
        begin: u64,
        flags: Flags,
        pre_joints: Joints,
        pre_io: Vec<bool>,
        speed: SpeedLevel,
        resume_stack: Vec<FrameState<'p>>,
    ) {
        if self.reversing {
            return;
        }
        let class = if flags.nonreversible {
            ReversibilityClass::NeverReversible
        } else {
            classify(instr, &self.options.actions)
        };
        self.undo.push(UndoUnit {
            begin,
            instr,
            class,
            skip: flags.skip,
            barrier: flags.barrier,
            pre_joints,
            pre_io,
            speed,
            resume_stack,
        });
    }

    fn exec_leaf(&mut self, instr: &'p Instruction) -> Result<(), Abort> {
        let top = self.frames.len() - 1;
        let frame_flags = self.frames[top].flags;
        let pre_joints = self.workcell.joints();
        let pre_io = self.workcell.io_bits().to_vec();
        let speed = self.active_speed;
        let class = classify(instr, &self.options.actions);
        let text = if self.sink.enabled() { format_instruction(instr) } else { String::new() };
        let begin = self.emit(Event::InstrBegin { instr: text, class, reverse_of: None })?;
        self.signaled = false;
        self.exec_kind(&instr.kind)?;
        self.emit(Event::InstrEnd { begin })?;

        if !frame_flags.opaque {
            let resume_stack = self.resume_stack();
            self.push_undo(instr, begin, frame_flags.with(&instr.annotation), pre_joints, pre_io, speed, resume_stack);
        }
        let location = location_key(&self.frames);
        self.frames[top].pc += 1;
        if self.signaled {
            self.signaled = false;
            if self.pending.as_ref().is_some_and(|p| p.error.respond_after != RespondAfter::CurrentSequence) {
                self.handle_pending()?;
            }
        } else {
            self.loop_guard.retain(|(loc, _), _| *loc != location);
        }
        Ok(())
    }

    /// Performs the effect of an instruction kind, without trace brackets.
    pub(crate) fn exec_kind(&mut self, kind: &'p InstrKind) -> Result<(), Abort> {
        match kind {
            InstrKind::MoveJoint(confs) => {
                for name in confs {
                    let Some(jc) = self.program.joint_conf(name) else {
                        return abort(format!("unresolved joint configuration `{name}`"));
                    };
                    let Ok(target) = <Joints>::try_from(jc.joints.as_slice()) else {
                        return abort(format!("joint configuration `{name}` does not have 6 values"));
                    };
                    self.move_joints_to(target)?;
                }
            }
            InstrKind::Io(name) => {
                let Some(op) = self.program.io_op(name) else {
                    return abort(format!("unresolved io operation `{name}`"));
                };
                self.apply_primitives(&op.primitives)?;
            }
            InstrKind::Wait(t) => self.workcell.advance_clock(*t),
            InstrKind::Call { action, items } => self.call_action(action, items, false)?,
            InstrKind::AdvMove(name) => {
                let Some(spec) = self.program.adv_move(name) else {
                    return abort(format!("unresolved advanced move `{name}`"));
                };
                self.execute_adv_move(spec)?;
            }
            InstrKind::SeqCall(name) => {
                // only reached for counterparts; forward calls go through frames
                let Some(seq) = self.program.sequence(name) else {
                    return abort(format!("unresolved sequence `{name}`"));
                };
                self.push_frame(FrameState { seq, pc: 0, call: None, flags: Flags::default() })?;
                let floor = self.frames.len() - 1;
                self.drive(floor)?;
            }
        }
        Ok(())
    }

    pub(crate) fn call_action(&mut self, action: &str, items: &[String], reverse: bool) -> Result<(), Abort> {
        let f = if reverse { self.options.actions.reverse(action) } else { self.options.actions.forward(action) };
        let Some(f) = f else {
            return abort(format!("unregistered action `{action}`"));
        };
        let mut call = ActionCall { action, items, workcell: &mut self.workcell, log: &mut self.log };
        f(&mut call).map_err(|e| Abort(format!("action `{action}` failed: {e}")))
    }

    /// Level primitives set a pending level, `bit` commits it, `sleep`
    /// advances the clock.
    pub(crate) fn apply_primitives(&mut self, prims: &[Primitive]) -> Result<(), Abort> {
        let mut level = None;
        for p in prims {
            match p {
                Primitive::SetLow => level = Some(false),
                Primitive::SetHigh => level = Some(true),
                Primitive::SelectBit(bit) => {
                    let Some(l) = level.take() else {
                        return abort(format!("bit {bit} selected without a level"));
                    };
                    let bit = *bit as usize;
                    self.workcell.set_io(bit, l).map_err(|e| Abort(e.to_string()))?;
                    self.emit(Event::IoWrite { bit, level: l })?;
                }
                Primitive::Sleep(t) => self.workcell.advance_clock(*t),
            }
        }
        Ok(())
    }

    pub(crate) fn move_joints_to(&mut self, target: Joints) -> Result<(), Abort> {
        let pose = self.workcell.kinematics().fk(&target);
        let speed = self.workcell.config().speed_map.get(self.active_speed);
        self.move_to(&pose, speed)
    }

    /// Free motion; running into an obstacle aborts the run.
    pub(crate) fn move_to(&mut self, target: &Pose, speed: f64) -> Result<(), Abort> {
        let dt = self.workcell.config().dt;
        loop {
            let out = self.workcell.step_motion(target, speed, dt).map_err(|e| Abort(e.to_string()))?;
            self.emit(Event::MotionSample { advanced: out.advanced, contact: out.contact, raw: None, filtered: None })?;
            if out.reached {
                return Ok(());
            }
            if out.contact {
                return abort("motion blocked by an obstacle");
            }
        }
    }

    pub(crate) fn signal_error(&mut self, name: &str) -> Result<&'p ErrorSpec, Abort> {
        if self.reversing {
            return abort(format!("error `{name}` during reversal"));
        }
        if self.in_recovery {
            return abort(format!("error during recovery: `{name}`"));
        }
        if let Some(p) = &self.pending {
            return abort(format!("error `{name}` signaled while `{}` is pending", p.error.name));
        }
        let Some(spec) = self.program.error(name) else {
            return abort(format!("undeclared error `{name}`"));
        };
        let count = self.error_counts.entry(name.to_string()).or_insert(0);
        *count += 1;
        let occurrence = *count;
        self.stats.errors += 1;
        self.emit(Event::ErrorSignaled { error: name.to_string(), occurrence })?;

        let location = self.frames.clone();
        let guard = self.loop_guard.entry((location_key(&location), name.to_string())).or_insert(0);
        *guard += 1;
        if *guard > self.options.max_resume_retries {
            return abort(format!(
                "error `{name}` signaled more than {} times at the same instruction",
                self.options.max_resume_retries
            ));
        }
        self.pending = Some(Pending { error: spec, location });
        self.signaled = true;
        Ok(spec)
    }

    fn handle_pending(&mut self) -> Result<(), Abort> {
        let p = self.pending.take().expect("pending error");
        let Some(rec_name) = &p.error.recovery_sequence else {
            return crate::reverse::recover_by_reversal(self, p.error, p.location);
        };
        let Some(seq) = self.program.sequence(rec_name) else {
            return abort(format!("unresolved recovery sequence `{rec_name}`"));
        };
        let (error, sequence) = (p.error.name.clone(), rec_name.clone());
        self.emit(Event::RecoveryBegin { error: error.clone(), sequence: sequence.clone() })?;
        self.stats.recoveries += 1;
        self.in_recovery = true;
        self.recovery_resume = Some(p.location.clone());
        self.push_frame(FrameState { seq, pc: 0, call: None, flags: Flags::default() })?;
        let floor = self.frames.len() - 1;
        self.drive(floor)?;
        self.in_recovery = false;
        self.recovery_resume = None;
        self.emit(Event::RecoveryEnd { error, sequence })?;

        let mut target = p.location;
        match p.error.return_to {
            ReturnTo::Action => {}
            ReturnTo::Sequence => {
                let top = target.last_mut().expect("non-empty location");
                match self.options.sequence_resume {
                    SequenceResume::Restart => top.pc = 0,
                    SequenceResume::Resume => top.pc += 1,
                }
            }
            ReturnTo::RestartProgram => {
                target.truncate(1);
                target[0].pc = 0;
            }
        }
        self.restore_stack(target)
    }

    /// Replaces the frame stack, closing abandoned calls and re-entering
    /// calls of the target stack with fresh trace brackets.
    pub(crate) fn restore_stack(&mut self, target: Vec<FrameState<'p>>) -> Result<(), Abort> {
        let mut common = 0;
        while common < self.frames.len() && common < target.len() && same_frame(&self.frames[common], &target[common]) {
            common += 1;
        }
        while self.frames.len() > common {
            let f = self.frames.pop().expect("frame");
            if let Some(call) = f.call {
                self.emit(Event::InstrEnd { begin: call.begin })?;
            }
        }
        for (cur, t) in self.frames.iter_mut().zip(&target) {
            cur.pc = t.pc;
        }
        for mut f in target.into_iter().skip(common) {
            if let Some(call) = f.call.take() {
                f.call = Some(self.begin_call_site(call.instr)?);
            }
            self.push_frame(f)?;
        }
        Ok(())
    }

    /// Runs a reverse counterpart bracketed as an instruction.
    pub(crate) fn exec_counterpart(
        &mut self,
        cp: &Counterpart<'p>,
        reverse_of: u64,
        class: ReversibilityClass,
    ) -> Result<(), Abort> {
        let text = if self.sink.enabled() { cp.to_string() } else { String::new() };
        let begin = self.emit(Event::InstrBegin { instr: text, class, reverse_of: Some(reverse_of) })?;
        match cp {
            Counterpart::Noop => {}
            Counterpart::Io(prims) => self.apply_primitives(prims)?,
            Counterpart::Wait(t) => self.workcell.advance_clock(*t),
            Counterpart::MoveTo(j) => self.move_joints_to(*j)?,
            Counterpart::ReverseAction { action, items } => self.call_action(action, items, true)?,
            Counterpart::Forward(kind) => self.exec_kind(kind)?,
        }
        self.emit(Event::InstrEnd { begin })?;
        Ok(())
    }
}

/// Runs `program` from its entry sequence.
pub fn run_program(
    program: &Program,
    config: WorkcellConfig,
    options: RunOptions,
    sink: Option<&mut dyn TraceSink>,
) -> RunResult {
    let mut null = NullSink;
    let sink: &mut dyn TraceSink = match sink {
        Some(s) => s,
        None => &mut null,
    };
    Controller::new(program, config, options, sink).run()
}
