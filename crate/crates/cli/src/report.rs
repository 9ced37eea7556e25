//! The structured result document written as `report.json` and printed by
//! every subcommand.

use std::fmt::Write as _;

use bitml::ast::StaticError;
use bitml::compiler::{RewriteHint, StandardnessViolation};
use bitml::parser::ParseError;
use bitml::verifier::{Stats, Witness};
use serde::Serialize;

/// Bumped whenever the JSON layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Verify,
    Compile,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: Command,
    pub input: String,
    pub exit_code: i32,
    pub parse_error: Option<ParseError>,
    pub static_errors: Vec<StaticError>,
    pub queries: Vec<QueryReport>,
    pub compile: Option<CompileReport>,
    /// Failures outside the other categories: unreadable files, strategy
    /// errors, exceeded state limits.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum QuerySpec {
    Liquidity { epsilon: u64 },
    Ltl { formula: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryReport {
    #[serde(flatten)]
    pub spec: QuerySpec,
    /// `None` when the check did not complete.
    pub verdict: Option<bool>,
    pub witness: Option<Witness>,
    pub stats: Option<Stats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompileReport {
    pub fee_per_tx: u64,
    pub templates: usize,
    pub total_fees: u64,
    pub standardness: Vec<StandardnessViolation>,
    pub hints: Vec<RewriteHint>,
    pub missing_preimages: Vec<String>,
    /// Files written to the output directory.
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(command: Command, input: &str) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command,
            input: input.to_string(),
            exit_code: 0,
            parse_error: None,
            static_errors: Vec::new(),
            queries: Vec::new(),
            compile: None,
            error: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(e) = &self.parse_error {
            let _ = writeln!(out, "{}:{e}", self.input);
        }
        if self.command == Command::Check && self.exit_code == 0 {
            let _ = writeln!(out, "{}: ok", self.input);
        }
        for e in &self.static_errors {
            let _ = writeln!(out, "static error: {e}");
        }
        for q in &self.queries {
            let what = match &q.spec {
                QuerySpec::Liquidity { epsilon } => format!("liquidity (epsilon {epsilon})"),
                QuerySpec::Ltl { formula } => format!("ltl {formula}"),
            };
            let verdict = q.verdict.map_or("error".to_string(), |v| v.to_string());
            let _ = write!(out, "{what}: {verdict}");
            if let Some(s) = &q.stats {
                let _ = write!(
                    out,
                    " [{} states, {} regions]",
                    s.states_explored, s.regions
                );
            }
            out.push('\n');
            if let Some(e) = &q.error {
                let _ = writeln!(out, "  error: {e}");
            }
            if let Some(w) = &q.witness {
                write_witness(&mut out, w);
            }
        }
        if let Some(c) = &self.compile {
            let _ = writeln!(
                out,
                "compiled {} templates, total fees {} satoshi ({} per transaction)",
                c.templates, c.total_fees, c.fee_per_tx
            );
            for v in &c.standardness {
                let _ = writeln!(out, "nonstandard: {v}");
            }
            for h in &c.hints {
                let _ = writeln!(out, "hint: {h}");
            }
            if !c.missing_preimages.is_empty() {
                let _ = writeln!(
                    out,
                    "missing preimages (placeholders used, those spends are invalid): {}",
                    c.missing_preimages.join(", ")
                );
            }
            for a in &c.artifacts {
                let _ = writeln!(out, "wrote {a}");
            }
        }
        if let Some(e) = &self.error {
            let _ = writeln!(out, "error: {e}");
        }
        let _ = writeln!(out, "exit code {}", self.exit_code);
        out
    }
}

fn write_witness(out: &mut String, w: &Witness) {
    let lengths: Vec<String> = w
        .lengths()
        .iter()
        .map(|(s, n)| format!("|{s}|={n}"))
        .collect();
    match w {
        Witness::Frozen { trace, state, .. } => {
            let _ = writeln!(
                out,
                "  frozen configuration ({} satoshi stuck) with {}",
                state.active_balance(),
                if lengths.is_empty() {
                    "no secrets".to_string()
                } else {
                    lengths.join(" ")
                }
            );
            for m in trace {
                let _ = writeln!(out, "    {m}");
            }
        }
        Witness::Lasso { lasso, .. } => {
            let _ = writeln!(
                out,
                "  counterexample with {}",
                if lengths.is_empty() {
                    "no secrets".to_string()
                } else {
                    lengths.join(" ")
                }
            );
            for (i, m) in lasso.moves.iter().enumerate() {
                if i == lasso.loop_start {
                    let _ = writeln!(out, "    loop:");
                }
                let _ = writeln!(
                    out,
                    "    {}",
                    m.as_ref().map_or("stutter".to_string(), |m| m.to_string())
                );
            }
        }
    }
}
