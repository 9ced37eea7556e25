//! Position-tracking s-expression reader.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl Pos {
    pub const START: Pos = Pos { line: 1, column: 1 };
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// A located syntax error. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{line}:{column}: {message}{}", expected.as_ref().map(|e| format!(" (expected {e})")).unwrap_or_default())]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Option<String>,
}

impl ParseError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        ParseError {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            expected: None,
        }
    }

    pub fn expected(pos: Pos, message: impl Into<String>, expected: impl Into<String>) -> Self {
        ParseError {
            expected: Some(expected.into()),
            ..Self::new(pos, message)
        }
    }

    pub fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExprKind {
    Atom(String),
    Str(String),
    List(Vec<SExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SExpr {
    pub kind: SExprKind,
    pub pos: Pos,
}

impl SExpr {
    pub fn as_list(&self) -> Option<&[SExpr]> {
        match &self.kind {
            SExprKind::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Atom(a) => Some(a),
            _ => None,
        }
    }

    /// The leading atom of a list form, e.g. `withdraw` in `(withdraw "A")`.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_atom()
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            SExprKind::Atom(a) => format!("`{a}`"),
            SExprKind::Str(s) => format!("string \"{s}\""),
            SExprKind::List(items) => match items.first().and_then(|i| i.as_atom()) {
                Some(h) => format!("`({h} ...)` form"),
                None => "list".to_string(),
            },
        }
    }
}

/// Nesting bound; keeps the recursive reader and later passes off the stack limit.
pub const MAX_DEPTH: usize = 200;

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
    last: Pos,
    depth: usize,
}

impl<'a> Reader<'a> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        self.last = self.pos;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else {
            self.pos.column += 1;
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

    fn eof_error(&self, expected: &str) -> ParseError {
        ParseError::expected(self.last, "unexpected end of input", expected)
    }

    fn read(&mut self) -> Result<SExpr, ParseError> {
        self.skip_trivia();
        let pos = self.pos;
        match self.chars.peek().copied() {
            None => Err(self.eof_error("an expression")),
            Some('(') => {
                if self.depth >= MAX_DEPTH {
                    return Err(ParseError::new(
                        pos,
                        format!("nesting deeper than {MAX_DEPTH} levels"),
                    ));
                }
                self.bump();
                self.depth += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => return Err(self.eof_error("`)`")),
                        Some(')') => {
                            self.bump();
                            self.depth -= 1;
                            break;
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
                Ok(SExpr {
                    kind: SExprKind::List(items),
                    pos,
                })
            }
            Some(')') => Err(ParseError::new(pos, "unbalanced `)`")),
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.eof_error("closing `\"`")),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some(c @ ('"' | '\\')) => s.push(c),
                            Some('n') => s.push('\n'),
                            Some(c) => {
                                return Err(ParseError::new(
                                    self.last,
                                    format!("unknown escape `\\{c}`"),
                                ))
                            }
                            None => return Err(self.eof_error("escape character")),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Ok(SExpr {
                    kind: SExprKind::Str(s),
                    pos,
                })
            }
            Some(_) => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == ';' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(SExpr {
                    kind: SExprKind::Atom(s),
                    pos,
                })
            }
        }
    }
}

/// Reads every top-level expression of `text`.
pub fn read_all(text: &str) -> Result<Vec<SExpr>, ParseError> {
    let mut r = Reader {
        chars: text.chars().peekable(),
        pos: Pos::START,
        last: Pos::START,
        depth: 0,
    };
    let mut out = Vec::new();
    loop {
        r.skip_trivia();
        if r.chars.peek().is_none() {
            return Ok(out);
        }
        out.push(r.read()?);
    }
}
