//! Canonical text output. Declarations are emitted grouped by kind in a
//! fixed order, keeping source order within each kind; defaults are omitted.

use std::fmt::Write;

use crate::model::*;

/// Shortest decimal text that parses back to exactly `v`. Never uses an
/// exponent.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn pretty_print(program: &Program) -> String {
    let mut blocks: Vec<String> = Vec::new();
    for item in &program.items {
        blocks.push(item_text(item));
    }
    for op in &program.io_ops {
        blocks.push(io_text(op));
    }
    if !program.joint_confs.is_empty() {
        let lines: Vec<String> = program
            .joint_confs
            .iter()
            .map(|jc| {
                let vals: Vec<String> = jc.joints.iter().map(|v| format_number(*v)).collect();
                format!("joint_configuration {} = {{{}}};\n", jc.name, vals.join(", "))
            })
            .collect();
        blocks.push(lines.concat());
    }
    for err in &program.errors {
        blocks.push(error_text(err));
    }
    for mv in &program.adv_moves {
        blocks.push(adv_move_text(mv));
    }
    for seq in &program.sequences {
        blocks.push(sequence_text(seq));
    }
    if let Some(entry) = &program.entry {
        blocks.push(format!("entry {};\n", quote(entry)));
    }
    blocks.join("\n")
}

fn item_text(item: &Item) -> String {
    if item.keyframes.is_empty() {
        return format!("item {} {{}}\n", quote(&item.name));
    }
    let mut s = format!("item {} {{\n", quote(&item.name));
    for kf in &item.keyframes {
        let coords: Vec<String> = kf
            .coordinates
            .iter()
            .map(|[x, y, z]| format!("({}, {}, {})", format_number(*x), format_number(*y), format_number(*z)))
            .collect();
        if coords.is_empty() {
            let _ = writeln!(s, "  keyframe {};", kf.name);
        } else {
            let _ = writeln!(s, "  keyframe {} {};", kf.name, coords.join(", "));
        }
    }
    s.push_str("}\n");
    s
}

fn io_text(op: &IoOperation) -> String {
    if op.primitives.is_empty() {
        return format!("io_operation {} {{}}\n", quote(&op.name));
    }
    let mut s = format!("io_operation {} {{\n", quote(&op.name));
    for p in &op.primitives {
        let _ = match p {
            Primitive::SetLow => writeln!(s, "  set_low;"),
            Primitive::SetHigh => writeln!(s, "  set_high;"),
            Primitive::SelectBit(b) => writeln!(s, "  bit {b};"),
            Primitive::Sleep(t) => writeln!(s, "  sleep {};", format_number(*t)),
        };
    }
    s.push_str("}\n");
    s
}

fn error_text(err: &ErrorSpec) -> String {
    let mut fields = Vec::new();
    if let Some(seq) = &err.recovery_sequence {
        fields.push(format!("recovery_sequence {};", quote(seq)));
    }
    match err.respond_after {
        RespondAfter::CurrentAction => {}
        RespondAfter::CurrentSequence => fields.push("respond_after current_sequence;".into()),
        RespondAfter::Immediately => fields.push("respond_after immediately;".into()),
    }
    match err.return_to {
        ReturnTo::Sequence => {}
        ReturnTo::Action => fields.push("return_to action;".into()),
        ReturnTo::RestartProgram => fields.push("return_to restart_program;".into()),
    }
    if fields.is_empty() {
        return format!("error {} {{}}\n", quote(&err.name));
    }
    let mut s = format!("error {} {{\n", quote(&err.name));
    for f in fields {
        let _ = writeln!(s, "  {f}");
    }
    s.push_str("}\n");
    s
}

pub fn format_query(q: &Query) -> String {
    match q {
        Query::ForcesExceed(t) => format!("forces_exceed({})", format_number(*t)),
        Query::DistanceCovered(cmp, v) => {
            let c = match cmp {
                Comparison::MoreThan => "more_than",
                Comparison::LessThan => "less_than",
            };
            format!("distance_covered({c}, {})", format_number(*v))
        }
    }
}

fn behavior_text(b: &Behavior) -> String {
    match b {
        Behavior::ReturnToInitialPosition => "return_to_initial_position".into(),
        Behavior::RepeatWithPerturbation(n) => format!("repeat_with_perturbation({n})"),
        Behavior::ThrowError(e) => format!("throw_error({})", quote(e)),
    }
}

fn direction_word(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Backwards => "backwards",
        Direction::Left => "left",
        Direction::Right => "right",
        Direction::Up => "up",
        Direction::Down => "down",
        Direction::X => "x",
        Direction::Y => "y",
        Direction::Z => "z",
    }
}

fn frame_word(f: Frame) -> &'static str {
    match f {
        Frame::Tcp => "tcp",
        Frame::Toolmount => "toolmount",
        Frame::Base => "base",
    }
}

fn adv_move_text(mv: &AdvMoveSpec) -> String {
    let mut s = format!("advanced_move {} {{\n", quote(&mv.name));
    if let Some(c) = &mv.condition {
        let _ = writeln!(s, "  condition {};", format_query(c));
    }
    s.push_str("  specification {\n");
    let _ = writeln!(
        s,
        "    distance {} direction {} frame {};",
        format_number(mv.motion.distance),
        direction_word(mv.motion.direction),
        frame_word(mv.motion.frame)
    );
    if let Some(q) = &mv.stop_if {
        let _ = writeln!(s, "    stop_if {};", format_query(q));
    }
    if let Some(level) = mv.speed {
        let _ = writeln!(s, "    speed {};", level.keyword());
    }
    s.push_str("  }\n");
    if !mv.eval_queries.is_empty() {
        s.push_str("  evaluation {\n");
        for q in &mv.eval_queries {
            let _ = writeln!(s, "    {};", format_query(q));
        }
        s.push_str("  }\n");
    }
    for (title, list) in [("on_success", &mv.on_success), ("on_fail", &mv.on_fail)] {
        if list.is_empty() {
            continue;
        }
        let _ = writeln!(s, "  {title} {{");
        for b in list {
            let _ = writeln!(s, "    {};", behavior_text(b));
        }
        s.push_str("  }\n");
    }
    s.push_str("}\n");
    s
}

fn sequence_text(seq: &Sequence) -> String {
    if seq.instructions.is_empty() {
        return format!("sequence {} {{}}\n", quote(&seq.name));
    }
    let mut s = format!("sequence {} {{\n", quote(&seq.name));
    for i in &seq.instructions {
        let _ = writeln!(s, "  {};", format_instruction(i));
    }
    s.push_str("}\n");
    s
}

/// Canonical text of one instruction, annotation included, without `;`.
pub fn format_instruction(instr: &Instruction) -> String {
    let body = format_instr_kind(&instr.kind);
    match &instr.annotation {
        None => body,
        Some(ReversibilityAnnotation::NonReversible) => format!("@nonreversible {body}"),
        Some(ReversibilityAnnotation::SkipOnReverse) => format!("@skip_on_reverse {body}"),
        Some(ReversibilityAnnotation::Barrier) => format!("@barrier {body}"),
        Some(ReversibilityAnnotation::ReverseWith(inner)) => {
            format!("@reverse_with({}) {body}", format_instr_kind(inner))
        }
    }
}

pub fn format_instr_kind(kind: &InstrKind) -> String {
    match kind {
        InstrKind::MoveJoint(confs) => format!("move to {}", confs.join(", ")),
        InstrKind::Io(name) => format!("io {}", quote(name)),
        InstrKind::Wait(t) => format!("wait {}", format_number(*t)),
        InstrKind::Call { action, items } => {
            let items: Vec<String> = items.iter().map(|i| quote(i)).collect();
            format!("call {} ({})", quote(action), items.join(" "))
        }
        InstrKind::AdvMove(name) => format!("adv_move {}", quote(name)),
        InstrKind::SeqCall(name) => format!("seq {}", quote(name)),
    }
}
