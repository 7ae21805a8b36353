use std::fmt;

use thiserror::Error;

/// 1-based line/column of a token in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    /// A well-formed construct outside the supported subset, e.g. `quantified effect`.
    Unsupported(String),
    Undeclared(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{pos}: {}", describe(.kind, .message))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub pos: Pos,
    pub message: String,
}

fn describe(kind: &ParseErrorKind, message: &str) -> String {
    match kind {
        ParseErrorKind::Syntax => format!("syntax error: {message}"),
        ParseErrorKind::Unsupported(what) if message.is_empty() => {
            format!("unsupported feature: {what}")
        }
        ParseErrorKind::Unsupported(what) => format!("unsupported feature: {what} ({message})"),
        ParseErrorKind::Undeclared(sym) => format!("undeclared symbol `{sym}`: {message}"),
    }
}

impl ParseError {
    pub fn syntax(pos: Pos, message: impl Into<String>) -> Self {
        ParseError { kind: ParseErrorKind::Syntax, pos, message: message.into() }
    }

    pub fn unsupported(pos: Pos, construct: impl Into<String>) -> Self {
        ParseError { kind: ParseErrorKind::Unsupported(construct.into()), pos, message: String::new() }
    }

    pub fn undeclared(pos: Pos, symbol: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError { kind: ParseErrorKind::Undeclared(symbol.into()), pos, message: message.into() }
    }

    pub fn is_unsupported(&self) -> bool {
        matches!(self.kind, ParseErrorKind::Unsupported(_))
    }
}
