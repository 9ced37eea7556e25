//! Surface syntax: contract files, strategies and LTL queries.

mod contract;
mod ltl;
mod printer;
pub mod sexpr;

use serde::Serialize;

use crate::ast::ContractSpec;
use crate::verifier::ltl::Formula;
use crate::verifier::strategy::Strategy;

pub use ltl::parse_ltl;
pub use printer::{pretty_print, print_file};
pub use sexpr::{ParseError, Pos};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub text: String,
    pub path: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile {
            text: text.into(),
            path: path.into(),
        }
    }
}

/// A query embedded in a contract file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum Query {
    Liquidity,
    Ltl { text: String, formula: Formula },
}

/// Everything a contract file declares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractFile {
    pub spec: ContractSpec,
    pub strategies: Vec<Strategy>,
    pub queries: Vec<Query>,
}

pub fn parse_file_str(text: &str) -> Result<ContractFile, ParseError> {
    contract::parse_forms(&sexpr::read_all(text)?)
}

pub fn parse_file(src: &SourceFile) -> Result<ContractFile, ParseError> {
    parse_file_str(&src.text)
}

/// Like [`parse_file_str`] but on raw bytes; invalid UTF-8 is a located error.
pub fn parse_file_bytes(bytes: &[u8]) -> Result<ContractFile, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_file_str(text),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or_default();
            let line = valid.matches('\n').count() + 1;
            let column = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            Err(ParseError::new(Pos { line, column }, "invalid UTF-8"))
        }
    }
}

pub fn parse_contract(src: &SourceFile) -> Result<ContractSpec, ParseError> {
    parse_file(src).map(|f| f.spec)
}

pub fn parse_contract_str(text: &str) -> Result<ContractSpec, ParseError> {
    parse_file_str(text).map(|f| f.spec)
}

/// Parses one `(strategy ...)` form.
pub fn parse_strategy(text: &str) -> Result<Strategy, ParseError> {
    let forms = sexpr::read_all(text)?;
    match forms.as_slice() {
        [one] => contract::strategy(one),
        [] => Err(ParseError::expected(
            Pos::START,
            "empty input",
            "`(strategy ...)`",
        )),
        [_, extra, ..] => Err(ParseError::expected(
            extra.pos,
            "trailing input",
            "a single strategy",
        )),
    }
}

/// Parses any number of `(strategy ...)` forms, e.g. a strategy file.
pub fn parse_strategies(text: &str) -> Result<Vec<Strategy>, ParseError> {
    sexpr::read_all(text)?
        .iter()
        .map(contract::strategy)
        .collect()
}
