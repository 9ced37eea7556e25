//! Contracts to transaction templates.
//!
//! `T_init` collects every deposit and fee deposit into one P2SH output
//! locked by the root contract's script. Every branch of every contract node
//! then gets one template spending that node's output: withdraw pays the
//! participant, split creates one output per arm, reveal re-locks the funds
//! under the continuation's script. Time guards become locktimes, auth guards
//! extra signature checks.
//!
//! Fees: `T_init` keeps all fee deposits minus its own fee as a reserve on
//! top of the contract balance. Each template burns at least `fee_per_tx`;
//! split arms receive the reserve their subtree needs and burn the rest,
//! withdraws burn whatever reserve is left.

pub mod script;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ast::{
    Branch, BranchPath, Contract, ContractSpec, Expr, Guard, NodePath, Outpoint, Predicate, Satoshi,
};
use crate::hash::hash160;
use crate::txwire::{assemble_redeem_script, ScriptError, MAX_PUSH};

pub use script::{KeyRef, ScriptExpr, SizePred, SizeTerm, Slot, ETA};

pub const DEFAULT_FEE_PER_TX: Satoshi = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Source {
    External { outpoint: Outpoint, owner: KeyRef },
    Internal { template: String, output: usize },
}

impl Serialize for Source {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Repr<'a> {
            External { outpoint: String, owner: &'a KeyRef },
            Internal { template: &'a str, output: usize },
        }
        match self {
            Source::External { outpoint, owner } => Repr::External {
                outpoint: outpoint.to_string(),
                owner,
            },
            Source::Internal { template, output } => Repr::Internal {
                template,
                output: *output,
            },
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Input {
    pub source: Source,
    pub value: Satoshi,
    /// Witness layout of the spent output: the owner's signature for an
    /// external deposit, the redeem script's slots for a contract output.
    pub slots: Vec<Slot>,
    pub redeem_script: Option<ScriptExpr>,
    /// Disjunct of the redeem script this spend satisfies.
    pub disjunct: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payout {
    P2pkh {
        participant: String,
        #[serde(serialize_with = "hex20")]
        pubkey_hash: [u8; 20],
    },
    P2sh {
        node: NodePath,
        script: ScriptExpr,
    },
}

fn hex20<S: Serializer>(h: &[u8; 20], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(h))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Output {
    pub value: Satoshi,
    #[serde(flatten)]
    pub payout: Payout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxTemplate {
    pub name: String,
    /// The contract branch this transaction executes; `None` for `T_init`.
    pub branch: Option<BranchPath>,
    pub inputs: Vec<Input>,
    pub outputs: Vec<Output>,
    /// Block height, 0 for none.
    pub locktime: u64,
}

impl TxTemplate {
    pub fn input_value(&self) -> Satoshi {
        self.inputs.iter().map(|i| i.value).sum()
    }

    pub fn output_value(&self) -> Satoshi {
        self.outputs.iter().map(|o| o.value).sum()
    }

    pub fn fee(&self) -> Satoshi {
        self.input_value() - self.output_value()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DagEdge {
    pub from: String,
    pub output: usize,
    pub to: String,
}

/// Templates in canonical order: `T_init`, then contract branches in
/// pre-order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxDag {
    pub fee_per_tx: Satoshi,
    pub templates: Vec<TxTemplate>,
    pub edges: Vec<DagEdge>,
}

impl TxDag {
    pub fn template(&self, name: &str) -> Option<&TxTemplate> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn root(&self) -> &TxTemplate {
        &self.templates[0]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dag serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("fee deposits total {available} satoshi, but {templates} transactions at {fee_per_tx} satoshi need {required}")]
    InsufficientFees {
        available: Satoshi,
        required: Satoshi,
        templates: usize,
        fee_per_tx: Satoshi,
    },
    #[error("{} standardness violation(s), first: {}", .0.len(), .0[0])]
    Standardness(Vec<StandardnessViolation>),
}

pub fn template_name(path: &BranchPath) -> String {
    let mut ints = path.node.ints();
    ints.push(path.choice);
    let parts: Vec<String> = ints.iter().map(|i| i.to_string()).collect();
    format!("T_{}", parts.join("_"))
}

fn key_path(node: &NodePath, branch: usize) -> String {
    format!("{node}/{branch}")
}

/// Key `participant` signs with for the multisig of `branch` at `node`.
pub fn branch_key(
    spec: &ContractSpec,
    participant: &str,
    node: &NodePath,
    branch: usize,
) -> KeyRef {
    let p = spec.participant(participant).expect("declared participant");
    KeyRef::derive(participant, &p.pubkey, &key_path(node, branch))
}

/// Key `participant` authorizes the guard at `depth` of `branch` with.
pub fn auth_key(
    spec: &ContractSpec,
    participant: &str,
    node: &NodePath,
    branch: usize,
    depth: usize,
) -> KeyRef {
    let p = spec.participant(participant).expect("declared participant");
    KeyRef::derive(
        participant,
        &p.pubkey,
        &format!("{}/auth{depth}", key_path(node, branch)),
    )
}

fn size_term(e: &Expr) -> SizeTerm {
    match e {
        Expr::Const(c) => SizeTerm::Const { value: *c },
        Expr::Len(s) => SizeTerm::Sub {
            left: Box::new(SizeTerm::Size {
                slot: Slot::Preimage { secret: s.clone() },
            }),
            right: Box::new(SizeTerm::Const { value: ETA as i64 }),
        },
        Expr::Add(a, b) => SizeTerm::Add {
            left: Box::new(size_term(a)),
            right: Box::new(size_term(b)),
        },
        Expr::Sub(a, b) => SizeTerm::Sub {
            left: Box::new(size_term(a)),
            right: Box::new(size_term(b)),
        },
    }
}

fn size_pred(p: &Predicate) -> SizePred {
    let b = Box::new;
    match p {
        Predicate::True => SizePred::True,
        Predicate::Not(a) => SizePred::Not {
            arg: b(size_pred(a)),
        },
        Predicate::And(l, r) => SizePred::And {
            left: b(size_pred(l)),
            right: b(size_pred(r)),
        },
        Predicate::Or(l, r) => SizePred::Or {
            left: b(size_pred(l)),
            right: b(size_pred(r)),
        },
        Predicate::Eq(l, r) => SizePred::Eq {
            left: size_term(l),
            right: size_term(r),
        },
        Predicate::Lt(l, r) => SizePred::Lt {
            left: size_term(l),
            right: size_term(r),
        },
    }
}

fn branch_conjunct(spec: &ContractSpec, node: &NodePath, i: usize, b: &Branch) -> ScriptExpr {
    let mut args = vec![ScriptExpr::CheckMultiAll {
        keys: spec
            .participants
            .iter()
            .map(|p| branch_key(spec, &p.name, node, i))
            .collect(),
    }];
    let (guards, core) = b.unguard();
    for (depth, g) in guards.iter().enumerate() {
        if let Guard::Auth(p) = g {
            args.push(ScriptExpr::CheckSig {
                key: auth_key(spec, p, node, i, depth),
            });
        }
    }
    if let Branch::Reveal {
        secrets, predicate, ..
    } = core
    {
        let mut all = secrets.clone();
        for s in predicate.secrets() {
            if !all.contains(&s) {
                all.push(s);
            }
        }
        for s in &all {
            let Some(c) = spec.precondition.secret(s) else {
                continue;
            };
            let slot = Slot::Preimage { secret: s.clone() };
            args.push(ScriptExpr::PreimageHashEq {
                slot: slot.clone(),
                hash: c.hash,
            });
            args.push(ScriptExpr::SizeAtLeast { slot, size: ETA });
        }
        if *predicate != Predicate::True {
            args.push(ScriptExpr::SizeCmp {
                pred: size_pred(predicate),
            });
        }
    }
    if args.len() == 1 {
        args.pop().expect("one conjunct")
    } else {
        ScriptExpr::And { args }
    }
}

/// The redeem script locking the output that holds contract node `node`.
pub fn script_of(node: &NodePath, spec: &ContractSpec) -> ScriptExpr {
    let c = spec.contract.node(node).expect("node exists");
    let mut args: Vec<ScriptExpr> = c
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| branch_conjunct(spec, node, i, b))
        .collect();
    if args.len() == 1 {
        args.pop().expect("one branch")
    } else {
        ScriptExpr::Or { args }
    }
}

/// Reserve a contract needs to pay the fees of its longest execution.
fn need(c: &Contract, fee: Satoshi) -> Satoshi {
    c.branches
        .iter()
        .map(|b| match b.core() {
            Branch::Withdraw(_) => fee,
            Branch::Reveal { continuation, .. } => fee + need(continuation, fee),
            Branch::Split(arms) => {
                fee + arms.iter().map(|a| need(&a.contract, fee)).sum::<Satoshi>()
            }
            Branch::Auth(..) | Branch::After(..) => unreachable!("core is unguarded"),
        })
        .max()
        .unwrap_or(0)
}

struct Builder<'a> {
    spec: &'a ContractSpec,
    fee: Satoshi,
    templates: Vec<TxTemplate>,
    edges: Vec<DagEdge>,
}

impl Builder<'_> {
    /// Templates for every branch of `node`, whose output `(parent, output)` holds `value`.
    fn node(
        &mut self,
        node: &NodePath,
        parent: &str,
        output: usize,
        value: Satoshi,
        balance: Satoshi,
    ) {
        let spec = self.spec;
        let c = spec.contract.node(node).expect("node exists");
        let redeem = script_of(node, spec);
        let slots = redeem.slots();
        let multi = c.branches.len() > 1;
        for (i, b) in c.branches.iter().enumerate() {
            let path = BranchPath::new(node.clone(), i, 0);
            let name = template_name(&path);
            let input = Input {
                source: Source::Internal {
                    template: parent.to_string(),
                    output,
                },
                value,
                slots: slots.clone(),
                redeem_script: Some(redeem.clone()),
                disjunct: multi.then_some(i),
            };
            self.edges.push(DagEdge {
                from: parent.to_string(),
                output,
                to: name.clone(),
            });
            let locktime = b.max_after().unwrap_or(0);
            let mut children = Vec::new();
            let outputs = match b.core() {
                Branch::Withdraw(p) => {
                    let pk = &spec.participant(p).expect("declared participant").pubkey;
                    vec![Output {
                        value: balance,
                        payout: Payout::P2pkh {
                            participant: p.clone(),
                            pubkey_hash: hash160(&pk.0),
                        },
                    }]
                }
                Branch::Reveal { .. } => {
                    let child = node.child(i, 0);
                    let v = value - self.fee;
                    children.push((child.clone(), 0, v, balance));
                    vec![Output {
                        value: v,
                        payout: Payout::P2sh {
                            script: script_of(&child, spec),
                            node: child,
                        },
                    }]
                }
                Branch::Split(arms) => arms
                    .iter()
                    .enumerate()
                    .map(|(k, arm)| {
                        let child = node.child(i, k);
                        let v = arm.value + need(&arm.contract, self.fee);
                        children.push((child.clone(), k, v, arm.value));
                        Output {
                            value: v,
                            payout: Payout::P2sh {
                                script: script_of(&child, spec),
                                node: child,
                            },
                        }
                    })
                    .collect(),
                Branch::Auth(..) | Branch::After(..) => unreachable!("core is unguarded"),
            };
            self.templates.push(TxTemplate {
                name: name.clone(),
                branch: Some(path),
                inputs: vec![input],
                outputs,
                locktime,
            });
            for (child, k, v, bal) in children {
                self.node(&child, &name, k, v, bal);
            }
        }
    }
}

fn count_templates(c: &Contract) -> usize {
    let mut n = 0;
    c.walk(&mut |_, node| n += node.branches.len());
    n
}

/// Builds the transaction DAG of a statically well-formed contract.
pub fn compile(spec: &ContractSpec, fee_per_tx: Satoshi) -> Result<TxDag, CompileError> {
    let templates = 1 + count_templates(&spec.contract);
    let available = spec.precondition.total_fees();
    let required = fee_per_tx.saturating_mul(templates as Satoshi);
    if available < required {
        return Err(CompileError::InsufficientFees {
            available,
            required,
            templates,
            fee_per_tx,
        });
    }
    debug_assert!(available - fee_per_tx >= need(&spec.contract, fee_per_tx));
    let pre = &spec.precondition;
    let owner_key = |owner: &str| {
        let p = spec.participant(owner).expect("declared participant");
        KeyRef::declared(owner, p.pubkey)
    };
    let inputs = pre
        .deposits
        .iter()
        .chain(&pre.fees)
        .map(|d| {
            let key = owner_key(&d.owner);
            Input {
                source: Source::External {
                    outpoint: d.outpoint,
                    owner: key.clone(),
                },
                value: d.value,
                slots: vec![Slot::Sig { key }],
                redeem_script: None,
                disjunct: None,
            }
        })
        .collect();
    let root = NodePath::root();
    let value = spec.root_balance() + available - fee_per_tx;
    let init = TxTemplate {
        name: "T_init".into(),
        branch: None,
        inputs,
        outputs: vec![Output {
            value,
            payout: Payout::P2sh {
                node: root.clone(),
                script: script_of(&root, spec),
            },
        }],
        locktime: 0,
    };
    let mut b = Builder {
        spec,
        fee: fee_per_tx,
        templates: vec![init],
        edges: Vec::new(),
    };
    b.node(&root, "T_init", 0, value, spec.root_balance());
    Ok(TxDag {
        fee_per_tx,
        templates: b.templates,
        edges: b.edges,
    })
}

/// [`compile`], then reject the DAG if it is not standard.
pub fn compile_strict(spec: &ContractSpec, fee_per_tx: Satoshi) -> Result<TxDag, CompileError> {
    let dag = compile(spec, fee_per_tx)?;
    let v = check_standardness(&dag);
    if v.is_empty() {
        Ok(dag)
    } else {
        Err(CompileError::Standardness(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StandardnessViolation {
    pub template: String,
    pub output: usize,
    pub node: NodePath,
    pub error: ScriptError,
}

impl fmt::Display for StandardnessViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "output {} of {} (contract node {}): {}",
            self.output, self.template, self.node, self.error
        )
    }
}

/// Redeem scripts whose serialization exceeds the push limit, or that
/// cannot be assembled at all.
pub fn check_standardness(dag: &TxDag) -> Vec<StandardnessViolation> {
    let mut out = Vec::new();
    for t in &dag.templates {
        for (k, o) in t.outputs.iter().enumerate() {
            if let Payout::P2sh { node, script } = &o.payout {
                if let Err(error) = assemble_redeem_script(script) {
                    out.push(StandardnessViolation {
                        template: t.name.clone(),
                        output: k,
                        node: node.clone(),
                        error,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RewriteHint {
    /// The oversized choice.
    pub node: NodePath,
    pub branches: usize,
    pub script_size: Option<usize>,
    pub message: String,
}

impl fmt::Display for RewriteHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Proposes nesting for every choice whose script breaks standardness.
pub fn suggest_flattening(spec: &ContractSpec) -> Vec<RewriteHint> {
    let mut hints = Vec::new();
    let mut nodes = Vec::new();
    spec.contract
        .walk(&mut |path, c| nodes.push((path.clone(), c.branches.len())));
    for (node, n) in nodes {
        let script = script_of(&node, spec);
        let error = match assemble_redeem_script(&script) {
            Ok(_) => continue,
            Err(e) => e,
        };
        let size = match error {
            ScriptError::ScriptTooLarge { size } => Some(size),
            _ => None,
        };
        let at = if node.is_root() {
            "the root choice".to_string()
        } else {
            format!("the choice at contract node {node}")
        };
        let span = |a: usize, b: usize| {
            if a == b {
                format!("branch {a}")
            } else {
                format!("branches {a}-{b}")
            }
        };
        let message = match (size, n) {
            (Some(_), 2..) => {
                let half = n.div_ceil(2);
                format!(
                    "{at} compiles to a redeem script over the {MAX_PUSH}-byte limit; nest it as a 2-way choice: \
                     {} in place, {} under a second choice behind a common guard",
                    span(0, half - 1),
                    span(half, n - 1)
                )
            }
            (Some(_), _) => format!(
                "{at} compiles to a redeem script over the {MAX_PUSH}-byte limit; fewer participants or secrets per branch are needed"
            ),
            (None, _) => format!("{at} has no standard script: {error}"),
        };
        hints.push(RewriteHint {
            node,
            branches: n,
            script_size: size,
            message,
        });
    }
    hints
}

/// Template names keyed by the branch they execute.
pub fn templates_by_branch(dag: &TxDag) -> BTreeMap<BranchPath, &TxTemplate> {
    dag.templates
        .iter()
        .filter_map(|t| t.branch.clone().map(|b| (b, t)))
        .collect()
}
