//! S-expression forms to contract, strategy and query values.

use crate::ast::{
    Branch, BranchPath, Contract, ContractSpec, Deposit, Expr, Hash256, Outpoint, Participant,
    Precondition, Predicate, PubKey, SecretCommitment, SplitArm, Txid,
};
use crate::verifier::strategy::{Action, Cond, Rule, Strategy};

use super::sexpr::{ParseError, SExpr, SExprKind};
use super::{ContractFile, Query};

type Result<T> = std::result::Result<T, ParseError>;

/// Arguments of a list form after its head atom.
struct Args<'a> {
    form: &'a SExpr,
    name: &'static str,
    items: &'a [SExpr],
    next: usize,
}

impl<'a> Args<'a> {
    fn next(&mut self, what: &str) -> Result<&'a SExpr> {
        match self.items.get(self.next) {
            Some(e) => {
                self.next += 1;
                Ok(e)
            }
            None => {
                let at = self.items.last().map_or(self.form.pos, |e| e.pos);
                Err(ParseError::expected(
                    at,
                    format!("`{}` form is missing an argument", self.name),
                    what,
                ))
            }
        }
    }

    fn peek(&self) -> Option<&'a SExpr> {
        self.items.get(self.next)
    }

    fn rest(&mut self) -> &'a [SExpr] {
        let r = &self.items[self.next..];
        self.next = self.items.len();
        r
    }

    fn done(&self) -> Result<()> {
        match self.items.get(self.next) {
            None => Ok(()),
            Some(e) => Err(ParseError::expected(
                e.pos,
                format!("unexpected {} in `{}` form", e.describe(), self.name),
                "`)`",
            )),
        }
    }
}

/// Matches `(name ...)` and returns its arguments.
fn form<'a>(e: &'a SExpr, name: &'static str) -> Result<Args<'a>> {
    match e.as_list() {
        Some([head, items @ ..]) if head.as_atom() == Some(name) => Ok(Args {
            form: e,
            name,
            items,
            next: 0,
        }),
        _ => Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            format!("`({name} ...)`"),
        )),
    }
}

/// Splits a list form into its head atom and arguments.
fn any_form(e: &SExpr) -> Option<(&str, &[SExpr])> {
    match e.as_list()? {
        [head, items @ ..] => Some((head.as_atom()?, items)),
        _ => None,
    }
}

fn args<'a>(e: &'a SExpr, name: &'static str, items: &'a [SExpr]) -> Args<'a> {
    Args {
        form: e,
        name,
        items,
        next: 0,
    }
}

fn string(e: &SExpr, what: &str) -> Result<String> {
    match &e.kind {
        SExprKind::Str(s) if !s.is_empty() => Ok(s.clone()),
        SExprKind::Str(_) => Err(ParseError::new(e.pos, format!("{what} must not be empty"))),
        _ => Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            format!("{what} as a quoted string"),
        )),
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_lowercase())
        && cs.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn ident(e: &SExpr) -> Result<String> {
    match e.as_atom() {
        Some(a) if is_ident(a) => Ok(a.to_string()),
        _ => Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            "a secret name (lowercase identifier)",
        )),
    }
}

fn uint(e: &SExpr, what: &str) -> Result<u64> {
    match e.as_atom() {
        Some(a) if !a.is_empty() && a.bytes().all(|b| b.is_ascii_digit()) => a
            .parse()
            .map_err(|_| ParseError::new(e.pos, format!("{what} `{a}` is out of range"))),
        _ => Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            what.to_string(),
        )),
    }
}

fn positive(e: &SExpr, what: &str) -> Result<u64> {
    match uint(e, what)? {
        0 => Err(ParseError::new(e.pos, format!("{what} must be positive"))),
        n => Ok(n),
    }
}

fn hex_token<'a>(e: &'a SExpr, what: &str) -> Result<&'a str> {
    match &e.kind {
        SExprKind::Atom(a) | SExprKind::Str(a) => Ok(a),
        SExprKind::List(_) => Err(ParseError::expected(
            e.pos,
            "unexpected list",
            what.to_string(),
        )),
    }
}

fn hex_value<T>(
    e: &SExpr,
    what: &str,
    parse: fn(&str) -> std::result::Result<T, String>,
) -> Result<T> {
    parse(hex_token(e, what)?)
        .map_err(|m| ParseError::expected(e.pos, format!("bad {what}: {m}"), what.to_string()))
}

pub(super) fn parse_forms(forms: &[SExpr]) -> Result<ContractFile> {
    let mut it = forms.iter().peekable();
    let mut participants = Vec::new();
    while let Some(e) = it.peek() {
        if e.head() != Some("participant") {
            break;
        }
        participants.push(participant(e)?);
        it.next();
    }
    let Some(c) = it.next() else {
        let at = forms.last().map_or(super::sexpr::Pos::START, |e| e.pos);
        return Err(ParseError::expected(
            at,
            "missing contract",
            "`(contract ...)`",
        ));
    };
    let (precondition, contract) = contract_form(c)?;
    let mut strategies = Vec::new();
    let mut queries = Vec::new();
    for e in it {
        match e.head() {
            Some("strategy") if queries.is_empty() => strategies.push(strategy(e)?),
            Some("check-liquid" | "check-query") => queries.push(query(e)?),
            Some("participant") => {
                return Err(ParseError::new(
                    e.pos,
                    "participants must be declared before the contract",
                ))
            }
            Some("contract") => {
                return Err(ParseError::new(e.pos, "a file holds exactly one contract"))
            }
            Some("strategy") => {
                return Err(ParseError::new(e.pos, "strategies must precede queries"))
            }
            _ => {
                return Err(ParseError::expected(
                    e.pos,
                    format!("unexpected {}", e.describe()),
                    "`(strategy ...)`, `(check-liquid)` or `(check-query ...)`",
                ))
            }
        }
    }
    Ok(ContractFile {
        spec: ContractSpec::new(participants, precondition, contract),
        strategies,
        queries,
    })
}

fn participant(e: &SExpr) -> Result<Participant> {
    let mut a = form(e, "participant")?;
    let name = string(a.next("participant name")?, "participant name")?;
    let pubkey = hex_value(
        a.next("public key")?,
        "compressed public key (33 bytes hex)",
        PubKey::parse,
    )?;
    a.done()?;
    Ok(Participant { name, pubkey })
}

fn contract_form(e: &SExpr) -> Result<(Precondition, Contract)> {
    let mut a = form(e, "contract")?;
    let pre = precondition(a.next("`(pre ...)`")?)?;
    let c = contract(a.next("a contract")?)?;
    a.done()?;
    Ok((pre, c))
}

fn precondition(e: &SExpr) -> Result<Precondition> {
    let mut a = form(e, "pre")?;
    let mut pre = Precondition::default();
    for item in a.rest() {
        match item.head() {
            Some("deposit") => pre.deposits.push(deposit(item, "deposit")?),
            Some("fee") => pre.fees.push(deposit(item, "fee")?),
            Some("secret") => {
                let mut s = form(item, "secret")?;
                let owner = string(s.next("owner")?, "owner")?;
                let name = ident(s.next("secret name")?)?;
                let hash = hex_value(s.next("hash")?, "32-byte hash (hex)", Hash256::from_hex)?;
                s.done()?;
                pre.secrets.push(SecretCommitment { owner, name, hash });
            }
            _ => {
                return Err(ParseError::expected(
                    item.pos,
                    format!("unexpected {}", item.describe()),
                    "`(deposit ...)`, `(fee ...)` or `(secret ...)`",
                ))
            }
        }
    }
    Ok(pre)
}

fn deposit(e: &SExpr, name: &'static str) -> Result<Deposit> {
    let mut a = form(e, name)?;
    let owner = string(a.next("owner")?, "owner")?;
    let value = positive(a.next("amount in satoshi")?, "amount in satoshi")?;
    let mut o = form(a.next("`(outpoint ...)`")?, "outpoint")?;
    let txid = hex_value(o.next("txid")?, "32-byte txid (hex)", Txid::from_hex)?;
    let vout_e = o.next("output index")?;
    let vout = u32::try_from(uint(vout_e, "output index")?)
        .map_err(|_| ParseError::new(vout_e.pos, "output index exceeds 32 bits"))?;
    o.done()?;
    a.done()?;
    Ok(Deposit {
        owner,
        value,
        outpoint: Outpoint { txid, vout },
    })
}

fn contract(e: &SExpr) -> Result<Contract> {
    match any_form(e) {
        Some(("choice", items)) => {
            if items.is_empty() {
                return Err(ParseError::expected(
                    e.pos,
                    "empty choice",
                    "at least one branch",
                ));
            }
            Ok(Contract::choice(
                items.iter().map(branch).collect::<Result<_>>()?,
            ))
        }
        _ => Ok(Contract::single(branch(e)?)),
    }
}

fn branch(e: &SExpr) -> Result<Branch> {
    let expected = "a branch: withdraw, split, auth, after or reveal";
    let Some((head, items)) = any_form(e) else {
        return Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            expected,
        ));
    };
    match head {
        "withdraw" => {
            let mut a = args(e, "withdraw", items);
            let p = string(a.next("participant")?, "participant")?;
            a.done()?;
            Ok(Branch::Withdraw(p))
        }
        "split" => {
            if items.is_empty() {
                return Err(ParseError::expected(
                    e.pos,
                    "empty split",
                    "at least one `(INT -> contract)` arm",
                ));
            }
            let arms = items.iter().map(arm).collect::<Result<_>>()?;
            Ok(Branch::Split(arms))
        }
        "auth" => {
            let mut a = args(e, "auth", items);
            let p = string(a.next("participant")?, "participant")?;
            let b = branch(a.next("guarded branch")?)?;
            a.done()?;
            Ok(Branch::Auth(p, Box::new(b)))
        }
        "after" => {
            let mut a = args(e, "after", items);
            let t = positive(
                a.next("deadline (block height)")?,
                "deadline (block height)",
            )?;
            let b = branch(a.next("guarded branch")?)?;
            a.done()?;
            Ok(Branch::After(t, Box::new(b)))
        }
        "reveal" => {
            let mut a = args(e, "reveal", items);
            let ids = a.next("`(secret ...)` list")?;
            let secrets = match ids.as_list() {
                Some(l) if !l.is_empty() => l.iter().map(ident).collect::<Result<Vec<_>>>()?,
                _ => {
                    return Err(ParseError::expected(
                        ids.pos,
                        format!("unexpected {}", ids.describe()),
                        "a nonempty list of secret names",
                    ))
                }
            };
            let mut predicate = Predicate::True;
            if a.peek().is_some_and(|p| p.head() == Some("pred")) {
                let mut pa = form(a.next("predicate")?, "pred")?;
                predicate = pexp(pa.next("predicate")?)?;
                pa.done()?;
            }
            let continuation = contract(a.next("continuation contract")?)?;
            a.done()?;
            Ok(Branch::Reveal {
                secrets,
                predicate,
                continuation,
            })
        }
        _ => Err(ParseError::expected(
            e.pos,
            format!("unknown form `{head}`"),
            expected,
        )),
    }
}

fn arm(e: &SExpr) -> Result<SplitArm> {
    let bad = || {
        ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            "`(INT -> contract)`",
        )
    };
    let l = e.as_list().ok_or_else(bad)?;
    let [v, arrow, c] = l else { return Err(bad()) };
    if arrow.as_atom() != Some("->") {
        return Err(ParseError::expected(
            arrow.pos,
            format!("unexpected {}", arrow.describe()),
            "`->`",
        ));
    }
    Ok(SplitArm {
        value: positive(v, "arm value in satoshi")?,
        contract: contract(c)?,
    })
}

fn pexp(e: &SExpr) -> Result<Predicate> {
    if e.as_atom() == Some("true") {
        return Ok(Predicate::True);
    }
    let expected = "`true`, `(not ...)`, `(and ...)`, `(or ...)`, `(= ...)` or `(< ...)`";
    let Some((head, items)) = any_form(e) else {
        return Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            expected,
        ));
    };
    let name: &'static str = match head {
        "not" => "not",
        "and" => "and",
        "or" => "or",
        "=" => "=",
        "<" => "<",
        _ => {
            return Err(ParseError::expected(
                e.pos,
                format!("unknown predicate `{head}`"),
                expected,
            ))
        }
    };
    let mut a = args(e, name, items);
    let p = match name {
        "not" => Predicate::not(pexp(a.next("predicate")?)?),
        "and" | "or" => {
            let l = pexp(a.next("predicate")?)?;
            let r = pexp(a.next("predicate")?)?;
            if name == "and" {
                Predicate::and(l, r)
            } else {
                Predicate::or(l, r)
            }
        }
        _ => {
            let l = aexp(a.next("arithmetic expression")?)?;
            let r = aexp(a.next("arithmetic expression")?)?;
            if name == "=" {
                Predicate::Eq(l, r)
            } else {
                Predicate::Lt(l, r)
            }
        }
    };
    a.done()?;
    Ok(p)
}

fn aexp(e: &SExpr) -> Result<Expr> {
    if let Some(a) = e.as_atom() {
        return a
            .parse::<i64>()
            .map(Expr::Const)
            .map_err(|_| ParseError::expected(e.pos, format!("unexpected `{a}`"), "an integer"));
    }
    let expected = "an integer, `(len ...)`, `(+ ...)` or `(- ...)`";
    let Some((head, items)) = any_form(e) else {
        return Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            expected,
        ));
    };
    match head {
        "len" => {
            let mut a = args(e, "len", items);
            let s = ident(a.next("secret name")?)?;
            a.done()?;
            Ok(Expr::Len(s))
        }
        "+" | "-" => {
            let mut a = args(e, if head == "+" { "+" } else { "-" }, items);
            let l = Box::new(aexp(a.next("arithmetic expression")?)?);
            let r = Box::new(aexp(a.next("arithmetic expression")?)?);
            a.done()?;
            Ok(if head == "+" {
                Expr::Add(l, r)
            } else {
                Expr::Sub(l, r)
            })
        }
        _ => Err(ParseError::expected(
            e.pos,
            format!("unknown expression `{head}`"),
            expected,
        )),
    }
}

pub(super) fn strategy(e: &SExpr) -> Result<Strategy> {
    let mut a = form(e, "strategy")?;
    let participant = string(a.next("participant")?, "participant")?;
    let act = a.next("`(do-reveal ...)` or `(do-auth ...)`")?;
    let action = match any_form(act) {
        Some(("do-reveal", items)) => {
            let mut r = args(act, "do-reveal", items);
            let secret = ident(r.next("secret name")?)?;
            r.done()?;
            Action::Reveal { secret }
        }
        Some(("do-auth", items)) => {
            let mut r = args(act, "do-auth", items);
            let path = bpath(r.next("`(branch ...)`")?)?;
            r.done()?;
            Action::Authorize { path }
        }
        _ => {
            return Err(ParseError::expected(
                act.pos,
                format!("unexpected {}", act.describe()),
                "`(do-reveal ...)` or `(do-auth ...)`",
            ))
        }
    };
    let mut condition = Cond::True;
    if let Some(c) = a.peek() {
        let mut i = form(c, "if")?;
        condition = cond(i.next("condition")?)?;
        i.done()?;
        a.next("condition")?;
    }
    a.done()?;
    Ok(Strategy {
        participant,
        rules: vec![Rule { action, condition }],
    })
}

pub(crate) fn bpath(e: &SExpr) -> Result<BranchPath> {
    let mut a = form(e, "branch")?;
    let ints = a
        .rest()
        .iter()
        .map(|i| uint(i, "branch index").map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    BranchPath::from_ints(&ints).ok_or_else(|| {
        ParseError::expected(
            e.pos,
            "malformed branch path",
            "an even number of indices: (branch arm)* pairs, then choice and depth",
        )
    })
}

fn cond(e: &SExpr) -> Result<Cond> {
    let expected = "`(revealed ...)`, `(authorized ...)`, `(time>= ...)` or `(and ...)`";
    let Some((head, items)) = any_form(e) else {
        return Err(ParseError::expected(
            e.pos,
            format!("unexpected {}", e.describe()),
            expected,
        ));
    };
    match head {
        "revealed" => {
            let mut a = args(e, "revealed", items);
            let secret = ident(a.next("secret name")?)?;
            a.done()?;
            Ok(Cond::Revealed { secret })
        }
        "authorized" => {
            let mut a = args(e, "authorized", items);
            let participant = string(a.next("participant")?, "participant")?;
            let path = bpath(a.next("`(branch ...)`")?)?;
            a.done()?;
            Ok(Cond::Authorized { participant, path })
        }
        "time>=" => {
            let mut a = args(e, "time>=", items);
            let height = uint(a.next("block height")?, "block height")?;
            a.done()?;
            Ok(Cond::TimeReached { height })
        }
        "and" => {
            let mut a = args(e, "and", items);
            let left = Box::new(cond(a.next("condition")?)?);
            let right = Box::new(cond(a.next("condition")?)?);
            a.done()?;
            Ok(Cond::And { left, right })
        }
        _ => Err(ParseError::expected(
            e.pos,
            format!("unknown condition `{head}`"),
            expected,
        )),
    }
}

fn query(e: &SExpr) -> Result<Query> {
    if e.head() == Some("check-liquid") {
        form(e, "check-liquid")?.done()?;
        return Ok(Query::Liquidity);
    }
    let mut a = form(e, "check-query")?;
    let q = a.next("LTL formula string")?;
    let text = string(q, "LTL formula")?;
    a.done()?;
    let formula = super::ltl::parse_ltl(&text).map_err(|err| {
        // Relocate into the file; exact when the string holds no escapes or newlines.
        let column = if err.line == 1 {
            q.pos.column + err.column
        } else {
            err.column
        };
        ParseError {
            line: q.pos.line + err.line - 1,
            column,
            ..err
        }
    })?;
    Ok(Query::Ltl { text, formula })
}
