//! Whole-program validation: name resolution and structural invariants.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::model::*;

/// Robot degrees of freedom assumed when no workcell is at hand.
pub const DEFAULT_DOF: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    /// The offending name, when there is one.
    pub name: Option<String>,
    pub location: Option<SourceLocation>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(loc) = self.location {
            write!(f, "{loc}: ")?;
        }
        f.write_str("error: ")?;
        f.write_str(&self.message)?;
        if let Some(name) = &self.name {
            write!(f, " `{name}`")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn len(&self) -> usize {
        self.diagnostics.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter()
    }
}

pub fn validate_program(program: &Program) -> ValidationReport {
    validate_program_with_dof(program, DEFAULT_DOF)
}

/// Validates against a robot with `dof` joints.
pub fn validate_program_with_dof(program: &Program, dof: usize) -> ValidationReport {
    let mut v = Validator { program, dof, out: Vec::new() };
    v.check_unique_names();
    v.check_items();
    v.check_io_ops();
    v.check_joint_confs();
    v.check_sequences();
    v.check_errors();
    v.check_adv_moves();
    v.check_recursion();
    v.check_entry();
    ValidationReport { diagnostics: v.out }
}

struct Validator<'a> {
    program: &'a Program,
    dof: usize,
    out: Vec<Diagnostic>,
}

impl<'a> Validator<'a> {
    fn report(&mut self, message: impl Into<String>, name: Option<&str>, loc: Loc) {
        self.out.push(Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            name: name.map(str::to_owned),
            location: loc.0,
        });
    }

    fn check_unique_names(&mut self) {
        let p = self.program;
        let kinds: [(DeclKind, Vec<(&str, Loc)>); 6] = [
            (DeclKind::Item, p.items.iter().map(|d| (d.name.as_str(), d.loc)).collect()),
            (DeclKind::IoOperation, p.io_ops.iter().map(|d| (d.name.as_str(), d.loc)).collect()),
            (DeclKind::JointConfiguration, p.joint_confs.iter().map(|d| (d.name.as_str(), d.loc)).collect()),
            (DeclKind::Sequence, p.sequences.iter().map(|d| (d.name.as_str(), d.loc)).collect()),
            (DeclKind::Error, p.errors.iter().map(|d| (d.name.as_str(), d.loc)).collect()),
            (DeclKind::AdvMove, p.adv_moves.iter().map(|d| (d.name.as_str(), d.loc)).collect()),
        ];
        for (kind, names) in kinds {
            let mut seen = HashSet::new();
            for (name, loc) in names {
                if !seen.insert(name) {
                    self.report(format!("duplicate {kind}"), Some(name), loc);
                }
            }
        }
    }

    fn check_items(&mut self) {
        for item in &self.program.items {
            if item.keyframes.is_empty() {
                self.report("item has no keyframes", Some(&item.name), item.loc);
            }
            for kf in &item.keyframes {
                if kf.coordinates.is_empty() {
                    self.report("keyframe has no coordinates", Some(&kf.name), item.loc);
                }
                if kf.coordinates.iter().flatten().any(|c| !c.is_finite()) {
                    self.report("keyframe coordinate is not finite", Some(&kf.name), item.loc);
                }
            }
        }
    }

    fn check_io_ops(&mut self) {
        for op in &self.program.io_ops {
            let mut pending = false;
            for prim in &op.primitives {
                match prim {
                    Primitive::SetLow | Primitive::SetHigh => {
                        if pending {
                            self.report("level primitive without a bit selection", Some(&op.name), op.loc);
                        }
                        pending = true;
                    }
                    Primitive::SelectBit(_) => {
                        if !pending {
                            self.report("bit selected without a preceding level", Some(&op.name), op.loc);
                        }
                        pending = false;
                    }
                    Primitive::Sleep(t) => {
                        if !(t.is_finite() && *t > 0.0) {
                            self.report("sleep duration must be positive", Some(&op.name), op.loc);
                        }
                    }
                }
            }
            if pending {
                self.report("level primitive without a bit selection", Some(&op.name), op.loc);
            }
        }
    }

    fn check_joint_confs(&mut self) {
        let dof = self.dof;
        for jc in &self.program.joint_confs {
            if jc.joints.len() != dof {
                self.report(
                    format!("joint configuration has {} values, expected {dof}", jc.joints.len()),
                    Some(&jc.name),
                    jc.loc,
                );
            }
            if jc.joints.iter().any(|j| !j.is_finite()) {
                self.report("joint value is not finite", Some(&jc.name), jc.loc);
            }
        }
    }

    fn check_sequences(&mut self) {
        for seq in &self.program.sequences {
            if seq.instructions.is_empty() {
                self.report("sequence is empty", Some(&seq.name), seq.loc);
            }
            for instr in &seq.instructions {
                let loc = if instr.loc.0.is_some() { instr.loc } else { seq.loc };
                self.check_instr_kind(&instr.kind, loc);
                if let Some(ReversibilityAnnotation::ReverseWith(inner)) = &instr.annotation {
                    self.check_instr_kind(inner, loc);
                }
            }
        }
    }

    fn check_instr_kind(&mut self, kind: &InstrKind, loc: Loc) {
        let p = self.program;
        match kind {
            InstrKind::MoveJoint(confs) => {
                if confs.is_empty() {
                    self.report("move has no waypoints", None, loc);
                }
                for c in confs {
                    if p.joint_conf(c).is_none() {
                        self.report("unresolved joint configuration", Some(c), loc);
                    }
                }
            }
            InstrKind::Io(name) => {
                if p.io_op(name).is_none() {
                    self.report("unresolved io operation", Some(name), loc);
                }
            }
            InstrKind::Wait(t) => {
                if !(t.is_finite() && *t > 0.0) {
                    self.report("wait duration must be positive", None, loc);
                }
            }
            InstrKind::Call { items, .. } => {
                for item in items {
                    if p.item(item).is_none() {
                        self.report("unresolved item", Some(item), loc);
                    }
                }
            }
            InstrKind::AdvMove(name) => {
                if p.adv_move(name).is_none() {
                    self.report("unresolved advanced move", Some(name), loc);
                }
            }
            InstrKind::SeqCall(name) => {
                if p.sequence(name).is_none() {
                    self.report("unresolved sequence", Some(name), loc);
                }
            }
        }
    }

    fn check_errors(&mut self) {
        let p = self.program;
        for err in &p.errors {
            let Some(rec) = &err.recovery_sequence else { continue };
            if p.sequence(rec).is_none() {
                self.report("unresolved recovery sequence", Some(rec), err.loc);
                continue;
            }
            let moves = reachable_adv_moves(p, rec);
            if moves.iter().filter_map(|m| p.adv_move(m)).any(|m| m.thrown_errors().any(|e| e == err.name)) {
                self.report("recovery sequence can throw the error it recovers from", Some(&err.name), err.loc);
            }
        }
    }

    fn check_adv_moves(&mut self) {
        let p = self.program;
        for mv in &p.adv_moves {
            let name = Some(mv.name.as_str());
            if !(mv.motion.distance.is_finite() && mv.motion.distance >= 0.0) {
                self.report("move distance must be finite and non-negative", name, mv.loc);
            }
            for q in mv.condition.iter().chain(&mv.stop_if).chain(&mv.eval_queries) {
                if let Some(msg) = query_problem(q) {
                    self.report(msg, name, mv.loc);
                }
            }
            if mv.eval_queries.is_empty() {
                self.report("advanced move has no evaluation queries", name, mv.loc);
            }
            if mv.on_fail.is_empty() {
                self.report("advanced move has no on_fail behavior", name, mv.loc);
            }
            for list in [&mv.on_success, &mv.on_fail] {
                let repeats = list.iter().filter(|b| matches!(b, Behavior::RepeatWithPerturbation(_))).count();
                if repeats > 1 {
                    self.report("more than one repeat_with_perturbation in a behavior list", name, mv.loc);
                }
                for b in list {
                    match b {
                        Behavior::RepeatWithPerturbation(0) => {
                            self.report("repeat_with_perturbation needs a positive count", name, mv.loc)
                        }
                        Behavior::ThrowError(e) if p.error(e).is_none() => {
                            self.report("unresolved error", Some(e), mv.loc)
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    fn check_recursion(&mut self) {
        let p = self.program;
        // 0 = unvisited, 1 = on the DFS stack, 2 = done
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        let mut cycles = Vec::new();
        for seq in &p.sequences {
            visit(p, &seq.name, &mut state, &mut cycles);
        }
        for name in cycles {
            let loc = p.sequence(name).map(|s| s.loc).unwrap_or_default();
            self.report("recursive sequence call", Some(name), loc);
        }

        fn visit<'p>(p: &'p Program, name: &'p str, state: &mut BTreeMap<&'p str, u8>, cycles: &mut Vec<&'p str>) {
            match state.get(name) {
                Some(1) => {
                    cycles.push(name);
                    return;
                }
                Some(_) => return,
                None => {}
            }
            let Some(seq) = p.sequence(name) else { return };
            state.insert(name, 1);
            for callee in called_sequences(seq) {
                visit(p, callee, state, cycles);
            }
            state.insert(name, 2);
        }
    }

    fn check_entry(&mut self) {
        let p = self.program;
        match &p.entry {
            Some(name) if p.sequence(name).is_none() => {
                self.report("unresolved entry sequence", Some(name), p.entry_loc)
            }
            None if p.sequences.is_empty() => self.report("program has no sequence to run", None, Loc::NONE),
            _ => {}
        }
    }
}

fn query_problem(q: &Query) -> Option<&'static str> {
    match *q {
        Query::ForcesExceed(t) if !(t.is_finite() && t > 0.0) => Some("force threshold must be positive"),
        Query::DistanceCovered(_, v) if !(v.is_finite() && v >= 0.0) => {
            Some("distance threshold must be finite and non-negative")
        }
        _ => None,
    }
}

/// Sequence names called by `seq`, including calls inside `@reverse_with`.
pub(crate) fn called_sequences(seq: &Sequence) -> impl Iterator<Item = &str> {
    seq.instructions.iter().flat_map(|i| {
        let payload = match &i.annotation {
            Some(ReversibilityAnnotation::ReverseWith(k)) => Some(k.as_ref()),
            _ => None,
        };
        std::iter::once(&i.kind).chain(payload).filter_map(|k| match k {
            InstrKind::SeqCall(n) => Some(n.as_str()),
            _ => None,
        })
    })
}

/// Advanced moves reachable from sequence `root` through sequence calls.
fn reachable_adv_moves<'p>(p: &'p Program, root: &'p str) -> BTreeSet<&'p str> {
    let mut seen = BTreeSet::new();
    let mut moves = BTreeSet::new();
    let mut work = vec![root];
    while let Some(name) = work.pop() {
        if !seen.insert(name) {
            continue;
        }
        let Some(seq) = p.sequence(name) else { continue };
        for instr in &seq.instructions {
            let payload = match &instr.annotation {
                Some(ReversibilityAnnotation::ReverseWith(k)) => Some(k.as_ref()),
                _ => None,
            };
            for kind in std::iter::once(&instr.kind).chain(payload) {
                match kind {
                    InstrKind::AdvMove(m) => {
                        moves.insert(m.as_str());
                    }
                    InstrKind::SeqCall(s) => work.push(s.as_str()),
                    _ => {}
                }
            }
        }
    }
    moves
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(name: &str, instrs: Vec<InstrKind>) -> Sequence {
        Sequence { name: name.into(), instructions: instrs.into_iter().map(Instruction::new).collect(), loc: Loc::NONE }
    }

    fn conf(name: &str) -> JointConfiguration {
        JointConfiguration { name: name.into(), joints: vec![0.0; 6], loc: Loc::NONE }
    }

    fn adv(name: &str, on_fail: Vec<Behavior>) -> AdvMoveSpec {
        AdvMoveSpec {
            name: name.into(),
            condition: None,
            motion: MoveSpec { distance: 0.3, direction: Direction::Forward, frame: Frame::Tcp },
            stop_if: Some(Query::ForcesExceed(5.0)),
            speed: Some(SpeedLevel::Slow),
            eval_queries: vec![Query::DistanceCovered(Comparison::MoreThan, 0.2)],
            on_success: vec![],
            on_fail,
            loc: Loc::NONE,
        }
    }

    fn messages(r: &ValidationReport) -> Vec<&str> {
        r.iter().map(|d| d.message.as_str()).collect()
    }

    #[test]
    fn dangling_joint_configuration() {
        let p = Program {
            sequences: vec![seq("main", vec![InstrKind::MoveJoint(vec!["startPos".into()])])],
            ..Program::default()
        };
        let r = validate_program(&p);
        assert_eq!(messages(&r), ["unresolved joint configuration"]);
        assert_eq!(r.diagnostics[0].name.as_deref(), Some("startPos"));
    }

    #[test]
    fn mutual_recursion_reported_once() {
        let p = Program {
            sequences: vec![
                seq("a", vec![InstrKind::SeqCall("b".into())]),
                seq("b", vec![InstrKind::SeqCall("a".into())]),
            ],
            ..Program::default()
        };
        let r = validate_program(&p);
        assert_eq!(messages(&r), ["recursive sequence call"]);
    }

    #[test]
    fn self_recursion() {
        let p = Program { sequences: vec![seq("a", vec![InstrKind::SeqCall("a".into())])], ..Program::default() };
        assert_eq!(messages(&validate_program(&p)), ["recursive sequence call"]);
    }

    #[test]
    fn io_pairing_rules() {
        let op = |prims: Vec<Primitive>| Program {
            io_ops: vec![IoOperation { name: "op".into(), primitives: prims, loc: Loc::NONE }],
            sequences: vec![seq("main", vec![InstrKind::Io("op".into())])],
            ..Program::default()
        };
        use Primitive::*;
        assert!(validate_program(&op(vec![SetLow, SelectBit(0), Sleep(0.5)])).is_empty());
        assert!(validate_program(&op(vec![SetHigh, Sleep(0.1), SelectBit(2)])).is_empty());
        assert_eq!(validate_program(&op(vec![SetLow, SetHigh, SelectBit(0)])).len(), 1);
        assert_eq!(validate_program(&op(vec![SetLow])).len(), 1);
        assert_eq!(validate_program(&op(vec![SelectBit(0)])).len(), 1);
        assert_eq!(validate_program(&op(vec![Sleep(0.0)])).len(), 1);
    }

    #[test]
    fn joint_count_follows_dof() {
        let mut p = Program {
            joint_confs: vec![conf("a")],
            sequences: vec![seq("main", vec![InstrKind::MoveJoint(vec!["a".into()])])],
            ..Program::default()
        };
        assert!(validate_program(&p).is_empty());
        assert_eq!(validate_program_with_dof(&p, 7).len(), 1);
        p.joint_confs[0].joints.pop();
        assert_eq!(messages(&validate_program(&p)), ["joint configuration has 5 values, expected 6"]);
    }

    #[test]
    fn advanced_move_rules() {
        let mut p = Program {
            errors: vec![ErrorSpec {
                name: "e".into(),
                recovery_sequence: None,
                respond_after: RespondAfter::default(),
                return_to: ReturnTo::default(),
                loc: Loc::NONE,
            }],
            adv_moves: vec![adv("m", vec![Behavior::ThrowError("e".into())])],
            sequences: vec![seq("main", vec![InstrKind::AdvMove("m".into())])],
            ..Program::default()
        };
        assert!(validate_program(&p).is_empty());

        p.adv_moves[0].on_fail = vec![];
        assert_eq!(messages(&validate_program(&p)), ["advanced move has no on_fail behavior"]);

        p.adv_moves[0].on_fail = vec![Behavior::RepeatWithPerturbation(1), Behavior::RepeatWithPerturbation(2)];
        assert_eq!(messages(&validate_program(&p)), ["more than one repeat_with_perturbation in a behavior list"]);

        p.adv_moves[0].on_fail = vec![Behavior::ThrowError("nope".into())];
        assert_eq!(messages(&validate_program(&p)), ["unresolved error"]);

        p.adv_moves[0].on_fail = vec![Behavior::ReturnToInitialPosition];
        p.adv_moves[0].eval_queries.clear();
        p.adv_moves[0].stop_if = Some(Query::ForcesExceed(0.0));
        assert_eq!(
            messages(&validate_program(&p)),
            ["force threshold must be positive", "advanced move has no evaluation queries"]
        );
    }

    #[test]
    fn recovery_must_not_rethrow_its_own_error() {
        let p = Program {
            errors: vec![ErrorSpec {
                name: "e".into(),
                recovery_sequence: Some("rec".into()),
                respond_after: RespondAfter::default(),
                return_to: ReturnTo::default(),
                loc: Loc::NONE,
            }],
            adv_moves: vec![adv("m", vec![Behavior::ThrowError("e".into())])],
            sequences: vec![
                seq("inner", vec![InstrKind::AdvMove("m".into())]),
                seq("rec", vec![InstrKind::SeqCall("inner".into())]),
                seq("main", vec![InstrKind::AdvMove("m".into())]),
            ],
            ..Program::default()
        };
        assert_eq!(messages(&validate_program(&p)), ["recovery sequence can throw the error it recovers from"]);
    }

    #[test]
    fn duplicates_and_entry() {
        let p = Program {
            sequences: vec![seq("a", vec![InstrKind::Wait(1.0)]), seq("a", vec![InstrKind::Wait(2.0)])],
            entry: Some("zzz".into()),
            ..Program::default()
        };
        assert_eq!(messages(&validate_program(&p)), ["duplicate sequence", "unresolved entry sequence"]);
        assert_eq!(messages(&validate_program(&Program::default())), ["program has no sequence to run"]);
    }

    #[test]
    fn reverse_with_payload_is_resolved() {
        let p = Program {
            sequences: vec![Sequence {
                name: "main".into(),
                instructions: vec![Instruction::annotated(
                    InstrKind::Wait(1.0),
                    ReversibilityAnnotation::ReverseWith(Box::new(InstrKind::Io("ghost".into()))),
                )],
                loc: Loc::NONE,
            }],
            ..Program::default()
        };
        assert_eq!(messages(&validate_program(&p)), ["unresolved io operation"]);
    }

    #[test]
    fn validation_is_idempotent() {
        let p = Program {
            sequences: vec![seq("a", vec![InstrKind::SeqCall("a".into()), InstrKind::Io("x".into())])],
            ..Program::default()
        };
        assert_eq!(validate_program(&p), validate_program(&p));
    }
}
