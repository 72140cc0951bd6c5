//! Abstract syntax of assembly programs.
//!
//! A [`Program`] is a flat collection of named declarations of six kinds.
//! Declarations keep their source position in a [`Loc`], which never takes
//! part in equality: two programs are equal when their declarations are.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position of a token in program text. Lines and columns are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SourceLocation {
    pub line: u32,
    pub column: u32,
    pub offset: usize,
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Optional source position attached to a declaration or instruction.
///
/// Compares equal to every other `Loc`, so structural equality of the
/// syntax tree ignores where things were written.
#[derive(Debug, Clone, Copy, Default)]
pub struct Loc(pub Option<SourceLocation>);

impl Loc {
    pub const NONE: Loc = Loc(None);

    pub fn at(loc: SourceLocation) -> Self {
        Loc(Some(loc))
    }
}

impl PartialEq for Loc {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Loc {}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub name: String,
    pub coordinates: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub name: String,
    pub keyframes: Vec<Keyframe>,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    SetLow,
    SetHigh,
    SelectBit(u32),
    Sleep(f64),
}

impl Primitive {
    pub fn is_level(&self) -> bool {
        matches!(self, Primitive::SetLow | Primitive::SetHigh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoOperation {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointConfiguration {
    pub name: String,
    pub joints: Vec<f64>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub instructions: Vec<Instruction>,
    pub loc: Loc,
}

/// The operation an instruction performs, without its annotation.
#[derive(Debug, Clone, PartialEq)]
pub enum InstrKind {
    MoveJoint(Vec<String>),
    Io(String),
    Wait(f64),
    Call { action: String, items: Vec<String> },
    AdvMove(String),
    SeqCall(String),
}

/// Per-instruction override of the default reverse-execution behaviour.
#[derive(Debug, Clone, PartialEq)]
pub enum ReversibilityAnnotation {
    NonReversible,
    SkipOnReverse,
    Barrier,
    ReverseWith(Box<InstrKind>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub kind: InstrKind,
    pub annotation: Option<ReversibilityAnnotation>,
    pub loc: Loc,
}

impl Instruction {
    pub fn new(kind: InstrKind) -> Self {
        Instruction { kind, annotation: None, loc: Loc::NONE }
    }

    pub fn annotated(kind: InstrKind, annotation: ReversibilityAnnotation) -> Self {
        Instruction { kind, annotation: Some(annotation), loc: Loc::NONE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RespondAfter {
    #[default]
    CurrentAction,
    CurrentSequence,
    Immediately,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ReturnTo {
    Action,
    #[default]
    Sequence,
    RestartProgram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSpec {
    pub name: String,
    pub recovery_sequence: Option<String>,
    pub respond_after: RespondAfter,
    pub return_to: ReturnTo,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backwards,
    Left,
    Right,
    Up,
    Down,
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Tcp,
    Toolmount,
    Base,
}

/// Ordinal speed scale, fastest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedLevel {
    VeryFast,
    Fast,
    #[default]
    Normal,
    Slow,
    VerySlow,
}

impl SpeedLevel {
    pub const ALL: [SpeedLevel; 5] =
        [SpeedLevel::VeryFast, SpeedLevel::Fast, SpeedLevel::Normal, SpeedLevel::Slow, SpeedLevel::VerySlow];

    pub fn keyword(self) -> &'static str {
        match self {
            SpeedLevel::VeryFast => "very_fast",
            SpeedLevel::Fast => "fast",
            SpeedLevel::Normal => "normal",
            SpeedLevel::Slow => "slow",
            SpeedLevel::VerySlow => "very_slow",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.keyword() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    MoreThan,
    LessThan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Query {
    ForcesExceed(f64),
    DistanceCovered(Comparison, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Behavior {
    ReturnToInitialPosition,
    RepeatWithPerturbation(u32),
    ThrowError(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveSpec {
    pub distance: f64,
    pub direction: Direction,
    pub frame: Frame,
}

/// An error-aware guarded move.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvMoveSpec {
    pub name: String,
    /// Pre-move guard; a false condition counts as a failed attempt.
    pub condition: Option<Query>,
    pub motion: MoveSpec,
    pub stop_if: Option<Query>,
    pub speed: Option<SpeedLevel>,
    pub eval_queries: Vec<Query>,
    pub on_success: Vec<Behavior>,
    pub on_fail: Vec<Behavior>,
    pub loc: Loc,
}

impl AdvMoveSpec {
    /// Retry budget granted by the first `RepeatWithPerturbation` in `on_fail`.
    pub fn max_retries(&self) -> u32 {
        self.on_fail
            .iter()
            .find_map(|b| match b {
                Behavior::RepeatWithPerturbation(n) => Some(*n),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Names of all errors this move can throw.
    pub fn thrown_errors(&self) -> impl Iterator<Item = &str> {
        self.on_success.iter().chain(&self.on_fail).filter_map(|b| match b {
            Behavior::ThrowError(name) => Some(name.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeclKind {
    Item,
    IoOperation,
    JointConfiguration,
    Sequence,
    Error,
    AdvMove,
}

impl fmt::Display for DeclKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeclKind::Item => "item",
            DeclKind::IoOperation => "io operation",
            DeclKind::JointConfiguration => "joint configuration",
            DeclKind::Sequence => "sequence",
            DeclKind::Error => "error",
            DeclKind::AdvMove => "advanced move",
        })
    }
}

/// Borrowed view of one declaration, as returned by [`Program::resolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decl<'a> {
    Item(&'a Item),
    IoOperation(&'a IoOperation),
    JointConfiguration(&'a JointConfiguration),
    Sequence(&'a Sequence),
    Error(&'a ErrorSpec),
    AdvMove(&'a AdvMoveSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} `{name}` not found")]
pub struct NotFound {
    pub kind: DeclKind,
    pub name: String,
}

/// A parsed assembly program. Declarations keep their order within each kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub items: Vec<Item>,
    pub io_ops: Vec<IoOperation>,
    pub joint_confs: Vec<JointConfiguration>,
    pub sequences: Vec<Sequence>,
    pub errors: Vec<ErrorSpec>,
    pub adv_moves: Vec<AdvMoveSpec>,
    /// Explicit `entry` declaration. Without one the last sequence runs.
    pub entry: Option<String>,
    pub entry_loc: Loc,
}

impl Program {
    /// Name of the sequence execution starts from.
    pub fn entry_name(&self) -> Option<&str> {
        self.entry.as_deref().or_else(|| self.sequences.last().map(|s| s.name.as_str()))
    }

    pub fn resolve(&self, kind: DeclKind, name: &str) -> Result<Decl<'_>, NotFound> {
        let found = match kind {
            DeclKind::Item => self.item(name).map(Decl::Item),
            DeclKind::IoOperation => self.io_op(name).map(Decl::IoOperation),
            DeclKind::JointConfiguration => self.joint_conf(name).map(Decl::JointConfiguration),
            DeclKind::Sequence => self.sequence(name).map(Decl::Sequence),
            DeclKind::Error => self.error(name).map(Decl::Error),
            DeclKind::AdvMove => self.adv_move(name).map(Decl::AdvMove),
        };
        found.ok_or_else(|| NotFound { kind, name: name.to_owned() })
    }

    pub fn item(&self, name: &str) -> Option<&Item> {
        self.items.iter().find(|d| d.name == name)
    }

    pub fn io_op(&self, name: &str) -> Option<&IoOperation> {
        self.io_ops.iter().find(|d| d.name == name)
    }

    pub fn joint_conf(&self, name: &str) -> Option<&JointConfiguration> {
        self.joint_confs.iter().find(|d| d.name == name)
    }

    pub fn sequence(&self, name: &str) -> Option<&Sequence> {
        self.sequences.iter().find(|d| d.name == name)
    }

    pub fn error(&self, name: &str) -> Option<&ErrorSpec> {
        self.errors.iter().find(|d| d.name == name)
    }

    pub fn adv_move(&self, name: &str) -> Option<&AdvMoveSpec> {
        self.adv_moves.iter().find(|d| d.name == name)
    }
}
