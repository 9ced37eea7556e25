//! Abstract syntax of BitML contracts.
//!
//! A [`ContractSpec`] bundles the declared participants, the precondition
//! (persistent deposits, fee deposits and secret commitments) and the contract
//! tree. Contracts are choices of guarded branches; guards (`auth`, `after`)
//! wrap a core action (`withdraw`, `split`, `reveal`).
//!
//! Nodes of the tree are addressed by [`NodePath`] and branches by
//! [`BranchPath`]; both are absolute from the root contract.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Amounts are integer satoshi; 1 BTC = 10^8 satoshi.
pub type Satoshi = u64;

pub const SATOSHI_PER_BTC: Satoshi = 100_000_000;

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn from_hex(s: &str) -> Result<Self, String> {
                if s.len() != 2 * $len {
                    return Err(format!(
                        "expected {} hex characters, found {}",
                        2 * $len,
                        s.len()
                    ));
                }
                let mut out = [0u8; $len];
                hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
                Ok($name(out))
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }
    };
}

hex_newtype!(PubKey, 33);
hex_newtype!(Hash256, 32);
hex_newtype!(Txid, 32);

impl PubKey {
    /// Parses a compressed public key: 33 bytes, leading byte 0x02 or 0x03.
    pub fn parse(s: &str) -> Result<Self, String> {
        let key = Self::from_hex(s)?;
        if key.0[0] != 0x02 && key.0[0] != 0x03 {
            return Err(format!(
                "compressed public key must start with 02 or 03, found {:02x}",
                key.0[0]
            ));
        }
        Ok(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Participant {
    pub name: String,
    pub pubkey: PubKey,
}

/// A transaction output reference. The txid is kept in display byte order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Outpoint {
    pub txid: Txid,
    pub vout: u32,
}

impl fmt::Display for Outpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Deposit {
    pub owner: String,
    pub value: Satoshi,
    pub outpoint: Outpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SecretCommitment {
    pub owner: String,
    pub name: String,
    pub hash: Hash256,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Precondition {
    pub deposits: Vec<Deposit>,
    pub secrets: Vec<SecretCommitment>,
    pub fees: Vec<Deposit>,
}

impl Precondition {
    pub fn total_deposits(&self) -> Satoshi {
        self.deposits.iter().map(|d| d.value).sum()
    }

    pub fn total_fees(&self) -> Satoshi {
        self.fees.iter().map(|d| d.value).sum()
    }

    pub fn secret(&self, name: &str) -> Option<&SecretCommitment> {
        self.secrets.iter().find(|s| s.name == name)
    }
}

/// Integer expressions over secret lengths.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Len(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
}

/// Predicates guarding `reveal` branches.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    True,
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Eq(Expr, Expr),
    Lt(Expr, Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("secret `{0}` has no length binding")]
pub struct UnboundSecret(pub String);

impl Expr {
    pub fn len(name: &str) -> Self {
        Expr::Len(name.to_string())
    }

    pub fn eval<F>(&self, lookup: &F) -> Result<BigInt, UnboundSecret>
    where
        F: Fn(&str) -> Option<u64>,
    {
        Ok(match self {
            Expr::Const(n) => BigInt::from(*n),
            Expr::Len(s) => BigInt::from(lookup(s).ok_or_else(|| UnboundSecret(s.clone()))?),
            Expr::Add(a, b) => a.eval(lookup)? + b.eval(lookup)?,
            Expr::Sub(a, b) => a.eval(lookup)? - b.eval(lookup)?,
        })
    }

    pub fn secrets_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Len(s) => {
                out.insert(s.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.secrets_into(out);
                b.secrets_into(out);
            }
        }
    }
}

impl Predicate {
    #[allow(clippy::should_implement_trait)]
    pub fn not(p: Predicate) -> Self {
        Predicate::Not(Box::new(p))
    }

    pub fn and(p: Predicate, q: Predicate) -> Self {
        Predicate::And(Box::new(p), Box::new(q))
    }

    pub fn or(p: Predicate, q: Predicate) -> Self {
        Predicate::Or(Box::new(p), Box::new(q))
    }

    /// Evaluates the predicate with exact integer arithmetic.
    pub fn eval<F>(&self, lookup: &F) -> Result<bool, UnboundSecret>
    where
        F: Fn(&str) -> Option<u64>,
    {
        Ok(match self {
            Predicate::True => true,
            Predicate::Not(p) => !p.eval(lookup)?,
            Predicate::And(p, q) => p.eval(lookup)? & q.eval(lookup)?,
            Predicate::Or(p, q) => p.eval(lookup)? | q.eval(lookup)?,
            Predicate::Eq(a, b) => a.eval(lookup)? == b.eval(lookup)?,
            Predicate::Lt(a, b) => a.eval(lookup)? < b.eval(lookup)?,
        })
    }

    pub fn secrets(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_comparisons(&mut |a, b| {
            a.secrets_into(&mut out);
            b.secrets_into(&mut out);
        });
        out
    }

    /// Calls `f` on both sides of every `=` and `<` comparison.
    pub fn visit_comparisons<'a>(&'a self, f: &mut dyn FnMut(&'a Expr, &'a Expr)) {
        match self {
            Predicate::True => {}
            Predicate::Not(p) => p.visit_comparisons(f),
            Predicate::And(p, q) | Predicate::Or(p, q) => {
                p.visit_comparisons(f);
                q.visit_comparisons(f);
            }
            Predicate::Eq(a, b) | Predicate::Lt(a, b) => f(a, b),
        }
    }
}

/// Evaluates `p` against a map of secret lengths.
pub fn eval_predicate(
    p: &Predicate,
    lengths: &BTreeMap<String, u64>,
) -> Result<bool, UnboundSecret> {
    p.eval(&|s: &str| lengths.get(s).copied())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SplitArm {
    pub value: Satoshi,
    pub contract: Contract,
}

/// One alternative of a choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Branch {
    Withdraw(String),
    Split(Vec<SplitArm>),
    Auth(String, Box<Branch>),
    After(u64, Box<Branch>),
    Reveal {
        secrets: Vec<String>,
        predicate: Predicate,
        continuation: Contract,
    },
}

/// A guard peeled off a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guard<'a> {
    Auth(&'a str),
    After(u64),
}

impl Branch {
    /// Splits a branch into its guard chain (outermost first) and its core.
    pub fn unguard(&self) -> (Vec<Guard<'_>>, &Branch) {
        let mut guards = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Branch::Auth(p, inner) => {
                    guards.push(Guard::Auth(p));
                    cur = inner;
                }
                Branch::After(t, inner) => {
                    guards.push(Guard::After(*t));
                    cur = inner;
                }
                core => return (guards, core),
            }
        }
    }

    pub fn core(&self) -> &Branch {
        self.unguard().1
    }

    /// Strips `depth` guards; `None` if the chain is shorter.
    pub fn at_depth(&self, depth: usize) -> Option<&Branch> {
        let mut cur = self;
        for _ in 0..depth {
            cur = match cur {
                Branch::Auth(_, inner) | Branch::After(_, inner) => inner,
                _ => return None,
            };
        }
        Some(cur)
    }

    /// Largest `after` height guarding this branch, if any.
    pub fn max_after(&self) -> Option<u64> {
        self.unguard()
            .0
            .iter()
            .filter_map(|g| match g {
                Guard::After(t) => Some(*t),
                Guard::Auth(_) => None,
            })
            .max()
    }

    /// Child contracts reachable by executing the branch, with arm indices.
    pub fn children(&self) -> Vec<(usize, &Contract)> {
        match self.core() {
            Branch::Split(arms) => arms.iter().map(|a| &a.contract).enumerate().collect(),
            Branch::Reveal { continuation, .. } => vec![(0, continuation)],
            _ => Vec::new(),
        }
    }
}

/// A choice among branches. A singleton list means no alternative.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Contract {
    pub branches: Vec<Branch>,
}

impl Contract {
    pub fn single(branch: Branch) -> Self {
        Contract {
            branches: vec![branch],
        }
    }

    pub fn choice(branches: Vec<Branch>) -> Self {
        Contract { branches }
    }

    pub fn node(&self, path: &NodePath) -> Option<&Contract> {
        let mut cur = self;
        for step in &path.0 {
            let branch = cur.branches.get(step.branch)?;
            cur = match branch.core() {
                Branch::Split(arms) => &arms.get(step.arm)?.contract,
                Branch::Reveal { continuation, .. } if step.arm == 0 => continuation,
                _ => return None,
            };
        }
        Some(cur)
    }

    pub fn branch_at(&self, path: &BranchPath) -> Option<&Branch> {
        self.node(&path.node)?
            .branches
            .get(path.choice)?
            .at_depth(path.depth)
    }

    /// Visits every contract node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&NodePath, &'a Contract)) {
        fn go<'a>(
            c: &'a Contract,
            path: &mut NodePath,
            f: &mut dyn FnMut(&NodePath, &'a Contract),
        ) {
            f(path, c);
            for (i, b) in c.branches.iter().enumerate() {
                for (arm, child) in b.children() {
                    path.0.push(NodeStep { branch: i, arm });
                    go(child, path, f);
                    path.0.pop();
                }
            }
        }
        go(self, &mut NodePath::root(), f);
    }
}

/// One descent step: take branch `branch` and enter child `arm`
/// (split arm index, or 0 for a reveal continuation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeStep {
    pub branch: usize,
    pub arm: usize,
}

/// Absolute address of a contract node; the root is the empty path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath(pub Vec<NodeStep>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, branch: usize, arm: usize) -> Self {
        let mut steps = self.0.clone();
        steps.push(NodeStep { branch, arm });
        NodePath(steps)
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// Flat integer form: `b0 a0 b1 a1 ...`.
    pub fn ints(&self) -> Vec<usize> {
        self.0.iter().flat_map(|s| [s.branch, s.arm]).collect()
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        let parts: Vec<String> = self.ints().iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

impl Serialize for NodePath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Address of a branch (and of one guard level within it).
///
/// The textual form is `(branch i1 i2 ...)`: pairs of `branch arm` descend
/// from the root, and the final pair is `choice depth`, where `depth` counts
/// guards stripped from the outermost one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchPath {
    pub node: NodePath,
    pub choice: usize,
    pub depth: usize,
}

impl BranchPath {
    pub fn new(node: NodePath, choice: usize, depth: usize) -> Self {
        BranchPath {
            node,
            choice,
            depth,
        }
    }

    pub fn top(choice: usize, depth: usize) -> Self {
        Self::new(NodePath::root(), choice, depth)
    }

    pub fn from_ints(ints: &[usize]) -> Option<Self> {
        if ints.len() < 2 || !ints.len().is_multiple_of(2) {
            return None;
        }
        let (descent, last) = ints.split_at(ints.len() - 2);
        let steps = descent
            .chunks(2)
            .map(|c| NodeStep {
                branch: c[0],
                arm: c[1],
            })
            .collect();
        Some(BranchPath::new(NodePath(steps), last[0], last[1]))
    }

    pub fn ints(&self) -> Vec<usize> {
        let mut v = self.node.ints();
        v.push(self.choice);
        v.push(self.depth);
        v
    }

    /// The same branch with no guards stripped.
    pub fn branch_root(&self) -> Self {
        BranchPath::new(self.node.clone(), self.choice, 0)
    }
}

impl fmt::Display for BranchPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(branch")?;
        for i in self.ints() {
            write!(f, " {i}")?;
        }
        f.write_str(")")
    }
}

impl Serialize for BranchPath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractSpec {
    pub participants: Vec<Participant>,
    pub precondition: Precondition,
    pub contract: Contract,
    /// Every `after` height in the contract, sorted and deduplicated.
    pub deadlines: BTreeSet<u64>,
}

impl ContractSpec {
    pub fn new(
        participants: Vec<Participant>,
        precondition: Precondition,
        contract: Contract,
    ) -> Self {
        let mut deadlines = BTreeSet::new();
        contract.walk(&mut |_, c| {
            for b in &c.branches {
                for g in b.unguard().0 {
                    if let Guard::After(t) = g {
                        deadlines.insert(t);
                    }
                }
            }
        });
        ContractSpec {
            participants,
            precondition,
            contract,
            deadlines,
        }
    }

    pub fn participant(&self, name: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.name == name)
    }

    /// Balance locked by the contract at stipulation (fees excluded).
    pub fn root_balance(&self) -> Satoshi {
        self.precondition.total_deposits()
    }

    /// Every predicate occurring in a `reveal` branch, with its branch path.
    pub fn predicates(&self) -> Vec<(BranchPath, &Predicate)> {
        let mut out = Vec::new();
        self.contract.walk(&mut |node, c| {
            for (i, b) in c.branches.iter().enumerate() {
                if let Branch::Reveal { predicate, .. } = b.core() {
                    out.push((BranchPath::new(node.clone(), i, 0), predicate));
                }
            }
        });
        out
    }
}

/// Static well-formedness violations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StaticError {
    #[error("secret hash {hash} is committed more than once")]
    DuplicateSecretHash { hash: String },
    #[error("outpoint {outpoint} is spent by more than one deposit")]
    DuplicateOutpoint { outpoint: String },
    #[error("secret name `{name}` is committed more than once")]
    DuplicateSecretName { name: String },
    #[error("participant `{name}` is declared more than once")]
    DuplicateParticipant { name: String },
    #[error("unknown participant `{name}` in {context}")]
    UnknownParticipant { name: String, context: String },
    #[error("unknown or out-of-scope secret `{name}` in {context}")]
    UnknownSecret { name: String, context: String },
    #[error("{0}")]
    ValueFlowMismatch(ValueFlowMismatch),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Error, Serialize)]
#[error("split at {path} divides {arms_total} satoshi but receives {incoming}")]
pub struct ValueFlowMismatch {
    pub path: BranchPath,
    pub incoming: Satoshi,
    pub arms_total: u128,
}

/// Reports every split whose arms do not sum to the balance entering it.
pub fn check_value_flow(spec: &ContractSpec) -> Vec<ValueFlowMismatch> {
    fn go(c: &Contract, node: &NodePath, incoming: Satoshi, out: &mut Vec<ValueFlowMismatch>) {
        for (i, b) in c.branches.iter().enumerate() {
            match b.core() {
                Branch::Split(arms) => {
                    let total: u128 = arms.iter().map(|a| a.value as u128).sum();
                    if total != incoming as u128 {
                        out.push(ValueFlowMismatch {
                            path: BranchPath::new(node.clone(), i, 0),
                            incoming,
                            arms_total: total,
                        });
                    }
                    for (k, arm) in arms.iter().enumerate() {
                        go(&arm.contract, &node.child(i, k), arm.value, out);
                    }
                }
                Branch::Reveal { continuation, .. } => {
                    go(continuation, &node.child(i, 0), incoming, out)
                }
                _ => {}
            }
        }
    }
    let mut out = Vec::new();
    go(
        &spec.contract,
        &NodePath::root(),
        spec.root_balance(),
        &mut out,
    );
    out
}

/// Runs every static check. The result is sorted; empty means well-formed.
pub fn check_static(spec: &ContractSpec) -> Vec<StaticError> {
    let mut errors = Vec::new();
    let pre = &spec.precondition;

    let mut names: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &spec.participants {
        *names.entry(p.name.as_str()).or_default() += 1;
    }
    for (name, n) in &names {
        if *n > 1 {
            errors.push(StaticError::DuplicateParticipant {
                name: name.to_string(),
            });
        }
    }

    let mut outpoints: BTreeMap<Outpoint, usize> = BTreeMap::new();
    for d in pre.deposits.iter().chain(&pre.fees) {
        *outpoints.entry(d.outpoint).or_default() += 1;
    }
    for (o, n) in outpoints {
        if n > 1 {
            errors.push(StaticError::DuplicateOutpoint {
                outpoint: o.to_string(),
            });
        }
    }

    let mut hashes: BTreeMap<Hash256, usize> = BTreeMap::new();
    let mut secret_names: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &pre.secrets {
        *hashes.entry(s.hash).or_default() += 1;
        *secret_names.entry(s.name.as_str()).or_default() += 1;
    }
    for (h, n) in hashes {
        if n > 1 {
            errors.push(StaticError::DuplicateSecretHash { hash: h.to_hex() });
        }
    }
    for (s, n) in secret_names {
        if n > 1 {
            errors.push(StaticError::DuplicateSecretName {
                name: s.to_string(),
            });
        }
    }

    let known = |name: &str| names.contains_key(name);
    for (kind, list) in [("deposit", &pre.deposits), ("fee deposit", &pre.fees)] {
        for d in list {
            if !known(&d.owner) {
                errors.push(StaticError::UnknownParticipant {
                    name: d.owner.clone(),
                    context: kind.to_string(),
                });
            }
        }
    }
    for s in &pre.secrets {
        if !known(&s.owner) {
            errors.push(StaticError::UnknownParticipant {
                name: s.owner.clone(),
                context: format!("commitment of secret `{}`", s.name),
            });
        }
    }

    let committed: BTreeSet<&str> = pre.secrets.iter().map(|s| s.name.as_str()).collect();
    check_tree(
        &spec.contract,
        &NodePath::root(),
        &BTreeSet::new(),
        &committed,
        &known,
        &mut errors,
    );

    errors.extend(
        check_value_flow(spec)
            .into_iter()
            .map(StaticError::ValueFlowMismatch),
    );
    errors.sort();
    errors
}

fn check_tree(
    c: &Contract,
    node: &NodePath,
    revealed: &BTreeSet<String>,
    committed: &BTreeSet<&str>,
    known: &dyn Fn(&str) -> bool,
    errors: &mut Vec<StaticError>,
) {
    for (i, b) in c.branches.iter().enumerate() {
        let here = BranchPath::new(node.clone(), i, 0);
        let mut cur = b;
        loop {
            match cur {
                Branch::Auth(p, inner) => {
                    if !known(p) {
                        errors.push(StaticError::UnknownParticipant {
                            name: p.clone(),
                            context: format!("auth at {here}"),
                        });
                    }
                    cur = inner;
                }
                Branch::After(_, inner) => cur = inner,
                Branch::Withdraw(p) => {
                    if !known(p) {
                        errors.push(StaticError::UnknownParticipant {
                            name: p.clone(),
                            context: format!("withdraw at {here}"),
                        });
                    }
                    break;
                }
                Branch::Split(arms) => {
                    for (k, arm) in arms.iter().enumerate() {
                        check_tree(
                            &arm.contract,
                            &node.child(i, k),
                            revealed,
                            committed,
                            known,
                            errors,
                        );
                    }
                    break;
                }
                Branch::Reveal {
                    secrets,
                    predicate,
                    continuation,
                } => {
                    for s in secrets {
                        if !committed.contains(s.as_str()) {
                            errors.push(StaticError::UnknownSecret {
                                name: s.clone(),
                                context: format!("reveal at {here}"),
                            });
                        }
                    }
                    let mut scope = revealed.clone();
                    scope.extend(secrets.iter().cloned());
                    for s in predicate.secrets() {
                        if !scope.contains(&s) || !committed.contains(s.as_str()) {
                            errors.push(StaticError::UnknownSecret {
                                name: s,
                                context: format!("predicate at {here}"),
                            });
                        }
                    }
                    check_tree(
                        continuation,
                        &node.child(i, 0),
                        &scope,
                        committed,
                        known,
                        errors,
                    );
                    break;
                }
            }
        }
    }
}
