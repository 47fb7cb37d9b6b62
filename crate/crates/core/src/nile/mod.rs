//! The Nile intent definition language: AST, parser, canonical renderer and
//! semantic validation.

mod ast;
mod lexer;
mod parser;
mod render;
mod validate;

use std::fmt;

use serde::Serialize;

pub use ast::*;
pub use parser::parse_nile;
pub use render::render_nile;
pub use validate::{validate_intent, ValidationReport, Violation, ViolationKind};

/// Syntax error with a 1-based source position and the set of tokens that
/// would have been accepted there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, column: usize, expected: Vec<String>, found: impl Into<String>) -> Self {
        Self {
            line,
            column,
            expected,
            found: found.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: expected ", self.line, self.column)?;
        match self.expected.as_slice() {
            [one] => write!(f, "{one}")?,
            many => write!(f, "one of {}", many.join(", "))?,
        }
        write!(f, ", found {}", self.found)
    }
}

/// Equality after collapsing all runs of whitespace.
pub fn whitespace_equal(a: &str, b: &str) -> bool {
    a.split_whitespace().eq(b.split_whitespace())
}
