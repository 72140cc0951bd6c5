//! LL(1) recursive-descent parser. Keywords are contextual: any word is
//! lexed as an identifier and only means something where the grammar
//! expects it.

use crate::model::*;
use crate::syntax::lexer::{tokenize, Token, TokenKind};
use crate::syntax::ParseError;

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(text)?;
    let program = p.program()?;
    Ok(program)
}

/// Parses one instruction (annotation allowed, no trailing `;`).
pub fn parse_instruction(text: &str) -> Result<Instruction, ParseError> {
    let mut p = Parser::new(text)?;
    let instr = p.instruction_body_with_annotation()?;
    p.expect_eof()?;
    Ok(instr)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

const DECL_KEYWORDS: [&str; 7] =
    ["item", "io_operation", "joint_configuration", "sequence", "error", "advanced_move", "entry"];

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        Ok(Parser { tokens: tokenize(text)?, pos: 0 })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_here<I, S>(&self, expected: I) -> ParseError
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let t = self.peek();
        ParseError::new(t.loc, expected, t.kind.to_string())
    }

    fn at_word(&self, word: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if s == word)
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.at_word(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, word: &str) -> PResult<()> {
        if self.eat_word(word) {
            Ok(())
        } else {
            Err(self.error_here([format!("`{word}`")]))
        }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<Token> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(self.error_here([format!("`{kind}`")]))
        }
    }

    fn eat(&mut self, kind: TokenKind) -> bool {
        if self.peek().kind == kind {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        if self.peek().kind == TokenKind::Eof {
            Ok(())
        } else {
            Err(self.error_here(["end of input"]))
        }
    }

    fn string(&mut self) -> PResult<String> {
        match &self.peek().kind {
            TokenKind::Str(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error_here(["string"])),
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match &self.peek().kind {
            TokenKind::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error_here(["identifier"])),
        }
    }

    fn number(&mut self) -> PResult<f64> {
        match &self.peek().kind {
            TokenKind::Number(s) => match s.parse::<f64>() {
                Ok(v) => {
                    self.bump();
                    Ok(v)
                }
                Err(_) => Err(self.error_here(["number"])),
            },
            _ => Err(self.error_here(["number"])),
        }
    }

    fn unsigned(&mut self) -> PResult<u32> {
        match &self.peek().kind {
            TokenKind::Number(s) if s.bytes().all(|b| b.is_ascii_digit()) => match s.parse::<u32>() {
                Ok(v) => {
                    self.bump();
                    Ok(v)
                }
                Err(_) => Err(self.error_here(["non-negative integer"])),
            },
            _ => Err(self.error_here(["non-negative integer"])),
        }
    }

    /// Matches the next identifier against a keyword table.
    fn keyword<T: Copy>(&mut self, table: &[(&str, T)]) -> PResult<T> {
        if let TokenKind::Ident(s) = &self.peek().kind {
            if let Some((_, v)) = table.iter().find(|(k, _)| k == s) {
                let v = *v;
                self.bump();
                return Ok(v);
            }
        }
        Err(self.error_here(table.iter().map(|(k, _)| format!("`{k}`"))))
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        loop {
            let tok = self.peek().clone();
            let loc = Loc::at(tok.loc);
            let word = match &tok.kind {
                TokenKind::Eof => return Ok(prog),
                TokenKind::Ident(w) if DECL_KEYWORDS.contains(&w.as_str()) => w.clone(),
                _ => return Err(self.error_here(["declaration"])),
            };
            self.bump();
            match word.as_str() {
                "item" => prog.items.push(self.item(loc)?),
                "io_operation" => prog.io_ops.push(self.io_operation(loc)?),
                "joint_configuration" => prog.joint_confs.push(self.joint_configuration(loc)?),
                "sequence" => prog.sequences.push(self.sequence(loc)?),
                "error" => prog.errors.push(self.error_decl(loc)?),
                "advanced_move" => prog.adv_moves.push(self.advanced_move(loc)?),
                _ => {
                    let name = self.string()?;
                    self.expect(TokenKind::Semi)?;
                    prog.entry = Some(name);
                    prog.entry_loc = loc;
                }
            }
        }
    }

    fn item(&mut self, loc: Loc) -> PResult<Item> {
        let name = self.string()?;
        self.expect(TokenKind::LBrace)?;
        let mut keyframes = Vec::new();
        while !self.eat(TokenKind::RBrace) {
            if !self.at_word("keyframe") {
                return Err(self.error_here(["`keyframe`", "`}`"]));
            }
            self.bump();
            let kf_name = self.ident()?;
            let mut coordinates = Vec::new();
            if self.peek().kind == TokenKind::LParen {
                loop {
                    coordinates.push(self.coordinate()?);
                    if !self.eat(TokenKind::Comma) {
                        break;
                    }
                }
            }
            self.expect(TokenKind::Semi)?;
            keyframes.push(Keyframe { name: kf_name, coordinates });
        }
        Ok(Item { name, keyframes, loc })
    }

    fn coordinate(&mut self) -> PResult<[f64; 3]> {
        self.expect(TokenKind::LParen)?;
        let x = self.number()?;
        self.expect(TokenKind::Comma)?;
        let y = self.number()?;
        self.expect(TokenKind::Comma)?;
        let z = self.number()?;
        self.expect(TokenKind::RParen)?;
        Ok([x, y, z])
    }

    fn io_operation(&mut self, loc: Loc) -> PResult<IoOperation> {
        let name = self.string()?;
        self.expect(TokenKind::LBrace)?;
        let mut primitives = Vec::new();
        while !self.eat(TokenKind::RBrace) {
            let prim = match &self.peek().kind {
                TokenKind::Ident(w) if w == "set_low" => {
                    self.bump();
                    Primitive::SetLow
                }
                TokenKind::Ident(w) if w == "set_high" => {
                    self.bump();
                    Primitive::SetHigh
                }
                TokenKind::Ident(w) if w == "bit" => {
                    self.bump();
                    Primitive::SelectBit(self.unsigned()?)
                }
                TokenKind::Ident(w) if w == "sleep" => {
                    self.bump();
                    Primitive::Sleep(self.number()?)
                }
                _ => return Err(self.error_here(["`set_low`", "`set_high`", "`bit`", "`sleep`", "`}`"])),
            };
            self.expect(TokenKind::Semi)?;
            primitives.push(prim);
        }
        Ok(IoOperation { name, primitives, loc })
    }

    fn joint_configuration(&mut self, loc: Loc) -> PResult<JointConfiguration> {
        let name = self.ident()?;
        self.expect(TokenKind::Eq)?;
        self.expect(TokenKind::LBrace)?;
        let mut joints = Vec::new();
        if !self.eat(TokenKind::RBrace) {
            loop {
                joints.push(self.number()?);
                if self.eat(TokenKind::RBrace) {
                    break;
                }
                if !self.eat(TokenKind::Comma) {
                    return Err(self.error_here(["`,`", "`}`"]));
                }
            }
        }
        self.expect(TokenKind::Semi)?;
        Ok(JointConfiguration { name, joints, loc })
    }

    fn sequence(&mut self, loc: Loc) -> PResult<Sequence> {
        let name = self.string()?;
        self.expect(TokenKind::LBrace)?;
        let mut instructions = vec![self.instruction()?];
        while !self.eat(TokenKind::RBrace) {
            instructions.push(self.instruction()?);
        }
        Ok(Sequence { name, instructions, loc })
    }

    fn instruction(&mut self) -> PResult<Instruction> {
        let instr = self.instruction_body_with_annotation()?;
        self.expect(TokenKind::Semi)?;
        Ok(instr)
    }

    fn instruction_body_with_annotation(&mut self) -> PResult<Instruction> {
        let loc = Loc::at(self.peek().loc);
        let annotation = if self.eat(TokenKind::At) { Some(self.annotation()?) } else { None };
        let kind = self.instruction_body()?;
        Ok(Instruction { kind, annotation, loc })
    }

    fn annotation(&mut self) -> PResult<ReversibilityAnnotation> {
        #[derive(Clone, Copy)]
        enum A {
            Non,
            Skip,
            Barrier,
            With,
        }
        let a = self.keyword(&[
            ("nonreversible", A::Non),
            ("skip_on_reverse", A::Skip),
            ("barrier", A::Barrier),
            ("reverse_with", A::With),
        ])?;
        Ok(match a {
            A::Non => ReversibilityAnnotation::NonReversible,
            A::Skip => ReversibilityAnnotation::SkipOnReverse,
            A::Barrier => ReversibilityAnnotation::Barrier,
            A::With => {
                self.expect(TokenKind::LParen)?;
                let inner = self.instruction_body()?;
                self.expect(TokenKind::RParen)?;
                ReversibilityAnnotation::ReverseWith(Box::new(inner))
            }
        })
    }

    fn instruction_body(&mut self) -> PResult<InstrKind> {
        let word = match &self.peek().kind {
            TokenKind::Ident(w) => w.clone(),
            _ => return Err(self.error_here(["instruction"])),
        };
        match word.as_str() {
            "move" => {
                self.bump();
                self.expect_word("to")?;
                let mut confs = vec![self.ident()?];
                while self.eat(TokenKind::Comma) {
                    confs.push(self.ident()?);
                }
                Ok(InstrKind::MoveJoint(confs))
            }
            "io" => {
                self.bump();
                Ok(InstrKind::Io(self.string()?))
            }
            "wait" => {
                self.bump();
                Ok(InstrKind::Wait(self.number()?))
            }
            "call" => {
                self.bump();
                let action = self.string()?;
                self.expect(TokenKind::LParen)?;
                let mut items = Vec::new();
                while !self.eat(TokenKind::RParen) {
                    match &self.peek().kind {
                        TokenKind::Str(_) => items.push(self.string()?),
                        _ => return Err(self.error_here(["string", "`)`"])),
                    }
                }
                Ok(InstrKind::Call { action, items })
            }
            "adv_move" => {
                self.bump();
                Ok(InstrKind::AdvMove(self.string()?))
            }
            "seq" => {
                self.bump();
                Ok(InstrKind::SeqCall(self.string()?))
            }
            _ => Err(self.error_here(["instruction"])),
        }
    }

    fn error_decl(&mut self, loc: Loc) -> PResult<ErrorSpec> {
        let name = self.string()?;
        self.expect(TokenKind::LBrace)?;
        let mut spec = ErrorSpec {
            name,
            recovery_sequence: None,
            respond_after: RespondAfter::default(),
            return_to: ReturnTo::default(),
            loc,
        };
        let mut seen = [false; 3];
        while !self.eat(TokenKind::RBrace) {
            let field = self.keyword(&[("recovery_sequence", 0usize), ("respond_after", 1), ("return_to", 2)]);
            let field = match field {
                Ok(f) if !seen[f] => f,
                Ok(_) => {
                    // a field may appear once; point at the repeat
                    self.pos -= 1;
                    let remaining: Vec<&str> = ["recovery_sequence", "respond_after", "return_to"]
                        .iter()
                        .zip(seen)
                        .filter(|(_, s)| !s)
                        .map(|(n, _)| *n)
                        .collect();
                    let mut expected: Vec<String> = remaining.iter().map(|n| format!("`{n}`")).collect();
                    expected.push("`}`".into());
                    return Err(self.error_here(expected));
                }
                Err(_) => {
                    return Err(self.error_here(["`recovery_sequence`", "`respond_after`", "`return_to`", "`}`"]))
                }
            };
            seen[field] = true;
            match field {
                0 => spec.recovery_sequence = Some(self.string()?),
                1 => {
                    spec.respond_after = self.keyword(&[
                        ("current_action", RespondAfter::CurrentAction),
                        ("current_sequence", RespondAfter::CurrentSequence),
                        ("immediately", RespondAfter::Immediately),
                    ])?
                }
                _ => {
                    spec.return_to = self.keyword(&[
                        ("action", ReturnTo::Action),
                        ("sequence", ReturnTo::Sequence),
                        ("restart_program", ReturnTo::RestartProgram),
                    ])?
                }
            }
            self.expect(TokenKind::Semi)?;
        }
        Ok(spec)
    }

    fn advanced_move(&mut self, loc: Loc) -> PResult<AdvMoveSpec> {
        let name = self.string()?;
        self.expect(TokenKind::LBrace)?;

        let condition = if self.eat_word("condition") {
            let q = self.query()?;
            self.expect(TokenKind::Semi)?;
            Some(q)
        } else {
            None
        };

        if !self.at_word("specification") {
            let expected: &[&str] =
                if condition.is_none() { &["`condition`", "`specification`"] } else { &["`specification`"] };
            return Err(self.error_here(expected.iter().copied()));
        }
        self.bump();
        self.expect(TokenKind::LBrace)?;
        self.expect_word("distance")?;
        let distance = self.number()?;
        self.expect_word("direction")?;
        let direction = self.keyword(&[
            ("forward", Direction::Forward),
            ("backwards", Direction::Backwards),
            ("left", Direction::Left),
            ("right", Direction::Right),
            ("up", Direction::Up),
            ("down", Direction::Down),
            ("x", Direction::X),
            ("y", Direction::Y),
            ("z", Direction::Z),
        ])?;
        self.expect_word("frame")?;
        let frame = self.keyword(&[("tcp", Frame::Tcp), ("toolmount", Frame::Toolmount), ("base", Frame::Base)])?;
        self.expect(TokenKind::Semi)?;
        let mut stop_if = None;
        let mut speed = None;
        while !self.eat(TokenKind::RBrace) {
            if stop_if.is_none() && self.eat_word("stop_if") {
                stop_if = Some(self.query()?);
            } else if speed.is_none() && self.eat_word("speed") {
                let table: Vec<(&str, SpeedLevel)> = SpeedLevel::ALL.iter().map(|l| (l.keyword(), *l)).collect();
                speed = Some(self.keyword(&table)?);
            } else {
                let mut expected = Vec::new();
                if stop_if.is_none() {
                    expected.push("`stop_if`");
                }
                if speed.is_none() {
                    expected.push("`speed`");
                }
                expected.push("`}`");
                return Err(self.error_here(expected));
            }
            self.expect(TokenKind::Semi)?;
        }

        let mut eval_queries = Vec::new();
        if self.eat_word("evaluation") {
            self.expect(TokenKind::LBrace)?;
            while !self.eat(TokenKind::RBrace) {
                eval_queries.push(self.query()?);
                self.expect(TokenKind::Semi)?;
            }
        }
        let mut on_success = Vec::new();
        if self.eat_word("on_success") {
            on_success = self.behavior_block()?;
        }
        let mut on_fail = Vec::new();
        while self.eat_word("on_fail") {
            on_fail.extend(self.behavior_block()?);
        }
        if !self.eat(TokenKind::RBrace) {
            let mut expected = Vec::new();
            if on_fail.is_empty() {
                if eval_queries.is_empty() {
                    expected.push("`evaluation`");
                }
                if on_success.is_empty() {
                    expected.push("`on_success`");
                }
            }
            expected.push("`on_fail`");
            expected.push("`}`");
            return Err(self.error_here(expected));
        }
        Ok(AdvMoveSpec {
            name,
            condition,
            motion: MoveSpec { distance, direction, frame },
            stop_if,
            speed,
            eval_queries,
            on_success,
            on_fail,
            loc,
        })
    }

    fn behavior_block(&mut self) -> PResult<Vec<Behavior>> {
        self.expect(TokenKind::LBrace)?;
        let mut out = Vec::new();
        while !self.eat(TokenKind::RBrace) {
            let b = match &self.peek().kind {
                TokenKind::Ident(w) if w == "return_to_initial_position" => {
                    self.bump();
                    Behavior::ReturnToInitialPosition
                }
                TokenKind::Ident(w) if w == "repeat_with_perturbation" => {
                    self.bump();
                    self.expect(TokenKind::LParen)?;
                    let n = self.unsigned()?;
                    self.expect(TokenKind::RParen)?;
                    Behavior::RepeatWithPerturbation(n)
                }
                TokenKind::Ident(w) if w == "throw_error" => {
                    self.bump();
                    self.expect(TokenKind::LParen)?;
                    let name = self.string()?;
                    self.expect(TokenKind::RParen)?;
                    Behavior::ThrowError(name)
                }
                _ => {
                    return Err(self.error_here([
                        "`return_to_initial_position`",
                        "`repeat_with_perturbation`",
                        "`throw_error`",
                        "`}`",
                    ]))
                }
            };
            self.expect(TokenKind::Semi)?;
            out.push(b);
        }
        Ok(out)
    }

    fn query(&mut self) -> PResult<Query> {
        if self.eat_word("forces_exceed") {
            self.expect(TokenKind::LParen)?;
            let t = self.number()?;
            self.expect(TokenKind::RParen)?;
            Ok(Query::ForcesExceed(t))
        } else if self.eat_word("distance_covered") {
            self.expect(TokenKind::LParen)?;
            let cmp = self.keyword(&[("more_than", Comparison::MoreThan), ("less_than", Comparison::LessThan)])?;
            self.expect(TokenKind::Comma)?;
            let v = self.number()?;
            self.expect(TokenKind::RParen)?;
            Ok(Query::DistanceCovered(cmp, v))
        } else {
            Err(self.error_here(["`forces_exceed`", "`distance_covered`"]))
        }
    }
}
