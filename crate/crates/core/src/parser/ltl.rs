//! LTL query syntax.
//!
//! Precedence from loosest: `=>`, `\/`, `/\`, `U`, then the prefix operators
//! `!`, `X`, `[]`, `<>`. All binary operators associate to the right.

use crate::ast::BranchPath;
use crate::semantics::Atom;
use crate::verifier::ltl::Formula;

use super::sexpr::{ParseError, Pos};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Box,
    Diamond,
    Implies,
    Or,
    And,
    Not,
    LParen,
    RParen,
    Next,
    Until,
    True,
    False,
    Revealed,
    HasDeposit,
    Satoshi,
    Authorized,
    Terminated,
    Branch,
    Num(String),
    Name(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Name(n) => format!("name `{n}`"),
            t => format!("`{}`", t.text()),
        }
    }

    fn text(&self) -> &str {
        match self {
            Tok::Box => "[]",
            Tok::Diamond => "<>",
            Tok::Implies => "=>",
            Tok::Or => "\\/",
            Tok::And => "/\\",
            Tok::Not => "!",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Next => "X",
            Tok::Until => "U",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Revealed => "revealed",
            Tok::HasDeposit => "has-deposit>=",
            Tok::Satoshi => "satoshi",
            Tok::Authorized => "authorized",
            Tok::Terminated => "contract-terminated",
            Tok::Branch => "branch",
            Tok::Num(s) | Tok::Name(s) => s,
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut pos = Pos::START;
    let mut rest = text;
    let advance = |pos: &mut Pos, s: &str| {
        for c in s.chars() {
            if c == '\n' {
                pos.line += 1;
                pos.column = 1;
            } else {
                pos.column += 1;
            }
        }
    };
    const SYMBOLS: [(&str, Tok); 8] = [
        ("[]", Tok::Box),
        ("<>", Tok::Diamond),
        ("=>", Tok::Implies),
        ("\\/", Tok::Or),
        ("/\\", Tok::And),
        ("!", Tok::Not),
        ("(", Tok::LParen),
        (")", Tok::RParen),
    ];
    'outer: while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            advance(&mut pos, &rest[..c.len_utf8()]);
            rest = &rest[c.len_utf8()..];
            continue;
        }
        for (sym, tok) in SYMBOLS.iter() {
            if let Some(r) = rest.strip_prefix(sym) {
                out.push((tok.clone(), pos));
                advance(&mut pos, sym);
                rest = r;
                continue 'outer;
            }
        }
        for (kw, tok) in [
            ("has-deposit>=", Tok::HasDeposit),
            ("contract-terminated", Tok::Terminated),
        ] {
            if let Some(r) = rest.strip_prefix(kw) {
                out.push((tok, pos));
                advance(&mut pos, kw);
                rest = r;
                continue 'outer;
            }
        }
        if c == '"' {
            let Some(end) = rest[1..].find('"') else {
                return Err(ParseError::expected(
                    pos,
                    "unterminated string",
                    "closing `\"`",
                ));
            };
            let name = &rest[1..1 + end];
            if name.is_empty() {
                return Err(ParseError::new(pos, "empty quoted name"));
            }
            out.push((Tok::Name(name.to_string()), pos));
            advance(&mut pos, &rest[..end + 2]);
            rest = &rest[end + 2..];
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' {
            let len = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            let word = &rest[..len];
            let tok = if c.is_ascii_digit() {
                if !word.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(ParseError::new(pos, format!("malformed number `{word}`")));
                }
                Tok::Num(word.to_string())
            } else {
                match word {
                    "X" => Tok::Next,
                    "U" => Tok::Until,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "revealed" => Tok::Revealed,
                    "satoshi" => Tok::Satoshi,
                    "authorized" => Tok::Authorized,
                    "branch" => Tok::Branch,
                    w => Tok::Name(w.to_string()),
                }
            };
            out.push((tok, pos));
            advance(&mut pos, word);
            rest = &rest[len..];
            continue;
        }
        return Err(ParseError::new(pos, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    end: Pos,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map_or(self.end, |(_, p)| *p)
    }

    fn error(&self, expected: &str) -> ParseError {
        match self.toks.get(self.i) {
            Some((t, p)) => {
                ParseError::expected(*p, format!("unexpected {}", t.describe()), expected)
            }
            None => ParseError::expected(self.end, "unexpected end of formula", expected),
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.error(&format!("`{}`", t.text())))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::new(
                self.pos(),
                format!("formula nested deeper than {MAX_DEPTH} levels"),
            ));
        }
        Ok(())
    }

    fn binary(
        &mut self,
        op: Tok,
        sub: fn(&mut Self) -> Result<Formula, ParseError>,
        make: fn(Formula, Formula) -> Formula,
    ) -> Result<Formula, ParseError> {
        self.enter()?;
        let lhs = sub(self)?;
        let f = if self.eat(&op) {
            let rhs = self.binary(op, sub, make)?;
            make(lhs, rhs)
        } else {
            lhs
        };
        self.depth -= 1;
        Ok(f)
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        self.binary(Tok::Implies, Self::or, Formula::implies)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        self.binary(Tok::Or, Self::and, Formula::or)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        self.binary(Tok::And, Self::until, Formula::and)
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        self.binary(Tok::Until, Self::unary, Formula::until)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        self.enter()?;
        let make: Option<fn(Formula) -> Formula> = match self.peek() {
            Some(Tok::Not) => Some(Formula::not),
            Some(Tok::Next) => Some(Formula::next),
            Some(Tok::Box) => Some(Formula::globally),
            Some(Tok::Diamond) => Some(Formula::finally),
            _ => None,
        };
        let f = match make {
            Some(make) => {
                self.i += 1;
                make(self.unary()?)
            }
            None => self.primary()?,
        };
        self.depth -= 1;
        Ok(f)
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        let expected = "a formula";
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.i += 1;
                let f = self.implies()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Some(Tok::True) => {
                self.i += 1;
                Ok(Formula::True)
            }
            Some(Tok::False) => {
                self.i += 1;
                Ok(Formula::False)
            }
            Some(Tok::Terminated) => {
                self.i += 1;
                Ok(Formula::Atom(Atom::Terminated))
            }
            Some(Tok::Name(name)) => {
                self.i += 1;
                self.atom(name)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn atom(&mut self, name: String) -> Result<Formula, ParseError> {
        let atom = match self.peek() {
            Some(Tok::Revealed) => {
                self.i += 1;
                Atom::Revealed(name)
            }
            Some(Tok::HasDeposit) => {
                self.i += 1;
                let amount = self.number("an amount in satoshi")?;
                self.expect(Tok::Satoshi)?;
                Atom::HasDeposit {
                    participant: name,
                    amount,
                }
            }
            Some(Tok::Authorized) => {
                self.i += 1;
                let at = self.pos();
                self.expect(Tok::LParen)?;
                self.expect(Tok::Branch)?;
                let mut ints = Vec::new();
                while let Some(Tok::Num(_)) = self.peek() {
                    ints.push(self.number("a branch index")? as usize);
                }
                self.expect(Tok::RParen)?;
                let path = BranchPath::from_ints(&ints).ok_or_else(|| {
                    ParseError::expected(
                        at,
                        "malformed branch path",
                        "an even number of indices: (branch arm)* pairs, then choice and depth",
                    )
                })?;
                Atom::Authorized {
                    participant: name,
                    path,
                }
            }
            _ => return Err(self.error("`revealed`, `has-deposit>=` or `authorized`")),
        };
        Ok(Formula::Atom(atom))
    }

    fn number(&mut self, what: &str) -> Result<u64, ParseError> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                let v = n.parse().map_err(|_| {
                    ParseError::new(self.pos(), format!("number `{n}` is out of range"))
                })?;
                self.i += 1;
                Ok(v)
            }
            _ => Err(self.error(what)),
        }
    }
}

/// Parses an LTL formula over contract atoms.
pub fn parse_ltl(text: &str) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let end = toks.last().map_or(Pos::START, |(_, p)| *p);
    let mut p = Parser {
        toks,
        i: 0,
        end,
        depth: 0,
    };
    let f = p.implies()?;
    if p.i < p.toks.len() {
        return Err(p.error("an operator or end of formula"));
    }
    Ok(f)
}
