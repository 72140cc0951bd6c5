//! Textual concrete syntax: lexer, recursive-descent parser and canonical
//! pretty printer. See `docs/grammar.md` for the grammar.

use std::fmt;

use thiserror::Error;

use crate::model::SourceLocation;

pub mod lexer;
mod parser;
mod printer;

pub use parser::{parse_instruction, parse_program};
pub use printer::{format_instr_kind, format_instruction, format_number, format_query, pretty_print};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub location: SourceLocation,
    /// What would have been accepted here. Never empty.
    pub expected: Vec<String>,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new<I, S>(location: SourceLocation, expected: I, found: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let expected: Vec<String> = expected.into_iter().map(Into::into).collect();
        debug_assert!(!expected.is_empty());
        ParseError { location, expected, found: found.into() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected ", self.location)?;
        for (i, e) in self.expected.iter().enumerate() {
            if i > 0 {
                f.write_str(if i + 1 == self.expected.len() { " or " } else { ", " })?;
            }
            f.write_str(e)?;
        }
        write!(f, ", found `{}`", self.found)
    }
}
