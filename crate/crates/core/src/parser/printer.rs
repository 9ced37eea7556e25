//! Canonical surface syntax for parsed values.

use std::fmt::Write;

use crate::ast::{Branch, Contract, ContractSpec, Deposit, Expr, Predicate};

use super::{ContractFile, Query};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Const(c) => c.to_string(),
        Expr::Len(s) => format!("(len {s})"),
        Expr::Add(a, b) => format!("(+ {} {})", expr(a), expr(b)),
        Expr::Sub(a, b) => format!("(- {} {})", expr(a), expr(b)),
    }
}

fn pred(p: &Predicate) -> String {
    match p {
        Predicate::True => "true".into(),
        Predicate::Not(a) => format!("(not {})", pred(a)),
        Predicate::And(a, b) => format!("(and {} {})", pred(a), pred(b)),
        Predicate::Or(a, b) => format!("(or {} {})", pred(a), pred(b)),
        Predicate::Eq(a, b) => format!("(= {} {})", expr(a), expr(b)),
        Predicate::Lt(a, b) => format!("(< {} {})", expr(a), expr(b)),
    }
}

fn indent(out: &mut String, level: usize) {
    out.push('\n');
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn contract(out: &mut String, c: &Contract, level: usize) {
    match c.branches.as_slice() {
        [b] => branch(out, b, level),
        bs => {
            out.push_str("(choice");
            for b in bs {
                indent(out, level + 1);
                branch(out, b, level + 1);
            }
            out.push(')');
        }
    }
}

fn branch(out: &mut String, b: &Branch, level: usize) {
    match b {
        Branch::Withdraw(p) => {
            let _ = write!(out, "(withdraw {})", quote(p));
        }
        Branch::Auth(p, b) => {
            let _ = write!(out, "(auth {} ", quote(p));
            branch(out, b, level);
            out.push(')');
        }
        Branch::After(t, b) => {
            let _ = write!(out, "(after {t} ");
            branch(out, b, level);
            out.push(')');
        }
        Branch::Split(arms) => {
            out.push_str("(split");
            for arm in arms {
                indent(out, level + 1);
                let _ = write!(out, "({} -> ", arm.value);
                contract(out, &arm.contract, level + 2);
                out.push(')');
            }
            out.push(')');
        }
        Branch::Reveal {
            secrets,
            predicate,
            continuation,
        } => {
            let _ = write!(out, "(reveal ({})", secrets.join(" "));
            if *predicate != Predicate::True {
                let _ = write!(out, " (pred {})", pred(predicate));
            }
            indent(out, level + 1);
            contract(out, continuation, level + 1);
            out.push(')');
        }
    }
}

fn deposit(out: &mut String, kind: &str, d: &Deposit) {
    let _ = write!(
        out,
        "\n    ({kind} {} {} (outpoint {} {}))",
        quote(&d.owner),
        d.value,
        d.outpoint.txid,
        d.outpoint.vout
    );
}

/// Prints participants and the contract form; the output reparses to an equal spec.
pub fn pretty_print(spec: &ContractSpec) -> String {
    let mut out = String::new();
    for p in &spec.participants {
        let _ = writeln!(out, "(participant {} {})", quote(&p.name), p.pubkey);
    }
    out.push_str("(contract\n  (pre");
    let pre = &spec.precondition;
    for d in &pre.deposits {
        deposit(&mut out, "deposit", d);
    }
    for d in &pre.fees {
        deposit(&mut out, "fee", d);
    }
    for s in &pre.secrets {
        let _ = write!(
            out,
            "\n    (secret {} {} {})",
            quote(&s.owner),
            s.name,
            s.hash
        );
    }
    out.push(')');
    indent(&mut out, 1);
    contract(&mut out, &spec.contract, 1);
    out.push_str(")\n");
    out
}

/// Prints a whole file, including strategies and queries.
pub fn print_file(file: &ContractFile) -> String {
    let mut out = pretty_print(&file.spec);
    for s in &file.strategies {
        let _ = writeln!(out, "{s}");
    }
    for q in &file.queries {
        match q {
            Query::Liquidity => out.push_str("(check-liquid)\n"),
            Query::Ltl { formula, .. } => {
                let _ = writeln!(out, "(check-query {})", quote(&formula.to_string()));
            }
        }
    }
    out
}
