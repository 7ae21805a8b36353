//! S-expression reader with source positions.
//!
//! PDDL is case-insensitive, so every atom is lowercased on the way in.
//! Comments start with `;` and run to the end of the line.

use std::fmt;

use super::error::{ParseError, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Atom(String, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(s, _) => Some(s),
            SExpr::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            SExpr::Atom(..) => None,
        }
    }

    /// The leading keyword of a list, e.g. `and` in `(and ...)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(SExpr::as_atom)
    }

    pub fn expect_atom(&self, what: &str) -> Result<&str, ParseError> {
        self.as_atom().ok_or_else(|| ParseError::syntax(self.pos(), format!("expected {what}, found a list")))
    }

    pub fn expect_list(&self, what: &str) -> Result<&[SExpr], ParseError> {
        self.as_list().ok_or_else(|| ParseError::syntax(self.pos(), format!("expected {what}, found `{self}`")))
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(s, _) => f.write_str(s),
            SExpr::List(items, _) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

const MAX_DEPTH: usize = 256;

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(&c) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn read(&mut self, depth: usize) -> Result<Option<SExpr>, ParseError> {
        self.skip_trivia();
        let start = self.pos();
        if depth > MAX_DEPTH {
            return Err(ParseError::syntax(start, "expression nested too deeply"));
        }
        match self.chars.peek() {
            None => Ok(None),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => return Err(ParseError::syntax(start, "unbalanced `(`")),
                        Some(')') => {
                            self.bump();
                            return Ok(Some(SExpr::List(items, start)));
                        }
                        Some(_) => {
                            // read() never returns None while input remains
                            if let Some(e) = self.read(depth + 1)? {
                                items.push(e);
                            }
                        }
                    }
                }
            }
            Some(')') => Err(ParseError::syntax(start, "unexpected `)`")),
            Some(_) => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.extend(c.to_lowercase());
                    self.bump();
                }
                Ok(Some(SExpr::Atom(s, start)))
            }
        }
    }
}

/// Reads exactly one top-level expression; trailing non-comment text is an error.
pub fn parse_one(text: &str) -> Result<SExpr, ParseError> {
    let mut r = Reader::new(text);
    let e = r.read(0)?.ok_or_else(|| ParseError::syntax(Pos { line: 1, col: 1 }, "empty input"))?;
    r.skip_trivia();
    if r.chars.peek().is_some() {
        return Err(ParseError::syntax(r.pos(), "trailing input after top-level expression"));
    }
    Ok(e)
}
