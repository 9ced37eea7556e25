//! Finite-state abstract semantics of BitML configurations.
//!
//! Time is quotiented into the intervals delimited by the contract's
//! deadlines, secret lengths are fixed up front by a [`LengthAssignment`],
//! and no new contracts are advertised at runtime. Under these restrictions
//! the reachable state space of a contract is finite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ast::{Branch, BranchPath, ContractSpec, Guard, NodePath, Satoshi};

/// Length each secret takes if it gets revealed.
pub type LengthAssignment = BTreeMap<String, u64>;

/// Partition of block heights into `[0,t1), [t1,t2), ..., [tk,inf)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimePartition {
    deadlines: Vec<u64>,
}

impl TimePartition {
    pub fn new(deadlines: impl IntoIterator<Item = u64>) -> Self {
        let set: BTreeSet<u64> = deadlines.into_iter().filter(|t| *t > 0).collect();
        TimePartition {
            deadlines: set.into_iter().collect(),
        }
    }

    pub fn deadlines(&self) -> &[u64] {
        &self.deadlines
    }

    pub fn interval_count(&self) -> usize {
        self.deadlines.len() + 1
    }

    pub fn lower_bound(&self, interval: usize) -> u64 {
        if interval == 0 {
            0
        } else {
            self.deadlines[interval - 1]
        }
    }

    /// Exclusive upper bound; `None` for the last interval.
    pub fn upper_bound(&self, interval: usize) -> Option<u64> {
        self.deadlines.get(interval).copied()
    }

    pub fn interval_of(&self, height: u64) -> usize {
        self.deadlines.partition_point(|t| *t <= height)
    }
}

/// Contract instance identifier. Splits mint `parent.0`, `parent.1`, ...
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContractId(pub Vec<u32>);

impl ContractId {
    pub fn child(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v.push(k as u32);
        ContractId(v)
    }
}

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("x")?;
        for k in &self.0 {
            write!(f, ".{k}")?;
        }
        Ok(())
    }
}

impl Serialize for ContractId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ActiveContract {
    pub cid: ContractId,
    pub node: NodePath,
    pub balance: Satoshi,
}

/// Inert funds owned by a participant after a withdraw.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct HeldDeposit {
    pub owner: String,
    pub value: Satoshi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecretState {
    Committed,
    Revealed(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Authorization {
    pub participant: String,
    pub path: BranchPath,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Configuration {
    /// Sorted by node path; node paths are unique among active contracts.
    pub active: Vec<ActiveContract>,
    /// Sorted multiset.
    pub deposits: Vec<HeldDeposit>,
    pub secrets: BTreeMap<String, SecretState>,
    pub auths: BTreeSet<Authorization>,
    pub interval: usize,
}

impl Configuration {
    pub fn active_balance(&self) -> Satoshi {
        self.active.iter().map(|a| a.balance).sum()
    }

    pub fn deposit_of(&self, participant: &str) -> u128 {
        self.deposits
            .iter()
            .filter(|d| d.owner == participant)
            .map(|d| d.value as u128)
            .sum()
    }

    pub fn total_value(&self) -> u128 {
        self.active.iter().map(|a| a.balance as u128).sum::<u128>()
            + self.deposits.iter().map(|d| d.value as u128).sum::<u128>()
    }

    pub fn revealed_length(&self, secret: &str) -> Option<u64> {
        match self.secrets.get(secret) {
            Some(SecretState::Revealed(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn is_revealed(&self, secret: &str) -> bool {
        self.revealed_length(secret).is_some()
    }

    pub fn is_authorized(&self, participant: &str, path: &BranchPath) -> bool {
        self.auths.contains(&Authorization {
            participant: participant.to_string(),
            path: path.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "move", rename_all = "snake_case")]
pub enum Move {
    Delay,
    RevealSecret {
        participant: String,
        secret: String,
        length: u64,
    },
    Authorize {
        participant: String,
        path: BranchPath,
    },
    Fire {
        cid: ContractId,
        path: BranchPath,
    },
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Delay => f.write_str("delay"),
            Move::RevealSecret {
                participant,
                secret,
                length,
            } => write!(f, "{participant} reveals {secret} (length {length})"),
            Move::Authorize { participant, path } => write!(f, "{participant} authorizes {path}"),
            Move::Fire { cid, path } => write!(f, "fire {path} of {cid}"),
        }
    }
}

/// How the declared strategies treat a move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveClass {
    /// Happens eventually: permissionless moves and strategy-mandated ones.
    Guaranteed,
    /// May or may not happen.
    Adversarial,
    /// Never happens.
    Prohibited,
}

/// State predicates usable as LTL atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "atom", rename_all = "snake_case")]
pub enum Atom {
    Revealed(String),
    HasDeposit {
        participant: String,
        amount: Satoshi,
    },
    Authorized {
        participant: String,
        path: BranchPath,
    },
    Terminated,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Revealed(s) => write!(f, "{s} revealed"),
            Atom::HasDeposit {
                participant,
                amount,
            } => write!(
                f,
                "{} has-deposit>= {amount} satoshi",
                quote_if_needed(participant)
            ),
            Atom::Authorized { participant, path } => {
                write!(f, "{} authorized {path}", quote_if_needed(participant))
            }
            Atom::Terminated => f.write_str("contract-terminated"),
        }
    }
}

fn quote_if_needed(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "X" | "U" | "true" | "false");
    if plain {
        name.to_string()
    } else {
        format!("\"{name}\"")
    }
}

pub fn atom_holds(cfg: &Configuration, atom: &Atom) -> bool {
    match atom {
        Atom::Revealed(s) => cfg.is_revealed(s),
        Atom::HasDeposit {
            participant,
            amount,
        } => cfg.deposit_of(participant) >= *amount as u128,
        Atom::Authorized { participant, path } => cfg.is_authorized(participant, path),
        Atom::Terminated => cfg.active.is_empty(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IllegalMove {
    #[error("move `{0}` is not enabled in this configuration")]
    NotEnabled(Move),
}

/// The transition system of one contract under one length assignment.
#[derive(Debug, Clone)]
pub struct Lts<'a> {
    spec: &'a ContractSpec,
    partition: TimePartition,
    lengths: LengthAssignment,
}

impl<'a> Lts<'a> {
    /// Builds the system with the contract's own deadlines as partition.
    pub fn new(spec: &'a ContractSpec, lengths: LengthAssignment) -> Self {
        let partition = TimePartition::new(spec.deadlines.iter().copied());
        Self::with_partition(spec, lengths, partition)
    }

    /// Uses a finer partition; it must contain every contract deadline.
    pub fn with_partition(
        spec: &'a ContractSpec,
        lengths: LengthAssignment,
        partition: TimePartition,
    ) -> Self {
        debug_assert!(spec
            .deadlines
            .iter()
            .all(|t| partition.deadlines().contains(t)));
        Lts {
            spec,
            partition,
            lengths,
        }
    }

    pub fn spec(&self) -> &'a ContractSpec {
        self.spec
    }

    pub fn partition(&self) -> &TimePartition {
        &self.partition
    }

    pub fn lengths(&self) -> &LengthAssignment {
        &self.lengths
    }

    pub fn initial(&self) -> Configuration {
        let secrets = self
            .spec
            .precondition
            .secrets
            .iter()
            .map(|s| (s.name.clone(), SecretState::Committed))
            .collect();
        Configuration {
            active: vec![ActiveContract {
                cid: ContractId::default(),
                node: NodePath::root(),
                balance: self.spec.root_balance(),
            }],
            deposits: Vec::new(),
            secrets,
            auths: BTreeSet::new(),
            interval: 0,
        }
    }

    /// All moves enabled in `cfg`, in a fixed order: delay, reveals,
    /// authorizations, then fires.
    pub fn enumerate_moves(&self, cfg: &Configuration) -> Vec<Move> {
        let mut moves = Vec::new();
        if cfg.interval + 1 < self.partition.interval_count() {
            moves.push(Move::Delay);
        }
        for s in &self.spec.precondition.secrets {
            if cfg.secrets.get(&s.name) == Some(&SecretState::Committed) {
                moves.push(Move::RevealSecret {
                    participant: s.owner.clone(),
                    secret: s.name.clone(),
                    length: self.lengths.get(&s.name).copied().unwrap_or(0),
                });
            }
        }
        for ac in &cfg.active {
            let Some(node) = self.spec.contract.node(&ac.node) else {
                continue;
            };
            for (i, b) in node.branches.iter().enumerate() {
                for (depth, g) in b.unguard().0.iter().enumerate() {
                    if let Guard::Auth(p) = g {
                        let path = BranchPath::new(ac.node.clone(), i, depth);
                        if !cfg.is_authorized(p, &path) {
                            moves.push(Move::Authorize {
                                participant: p.to_string(),
                                path,
                            });
                        }
                    }
                }
            }
        }
        for ac in &cfg.active {
            let Some(node) = self.spec.contract.node(&ac.node) else {
                continue;
            };
            for (i, b) in node.branches.iter().enumerate() {
                if self.branch_enabled(cfg, &ac.node, i, b) {
                    moves.push(Move::Fire {
                        cid: ac.cid.clone(),
                        path: BranchPath::new(ac.node.clone(), i, 0),
                    });
                }
            }
        }
        moves
    }

    fn branch_enabled(
        &self,
        cfg: &Configuration,
        node: &NodePath,
        index: usize,
        b: &Branch,
    ) -> bool {
        let now = self.partition.lower_bound(cfg.interval);
        let (guards, core) = b.unguard();
        for (depth, g) in guards.iter().enumerate() {
            let ok = match g {
                Guard::After(t) => now >= *t,
                Guard::Auth(p) => {
                    cfg.is_authorized(p, &BranchPath::new(node.clone(), index, depth))
                }
            };
            if !ok {
                return false;
            }
        }
        match core {
            Branch::Reveal {
                secrets, predicate, ..
            } => {
                secrets.iter().all(|s| cfg.is_revealed(s))
                    && predicate
                        .eval(&|s: &str| cfg.revealed_length(s))
                        .unwrap_or(false)
            }
            _ => true,
        }
    }

    /// Applies an enabled move.
    pub fn apply_move(&self, cfg: &Configuration, mv: &Move) -> Result<Configuration, IllegalMove> {
        if !self.enumerate_moves(cfg).contains(mv) {
            return Err(IllegalMove::NotEnabled(mv.clone()));
        }
        Ok(self.apply_enabled(cfg, mv))
    }

    /// Applies a move already known to be enabled.
    pub(crate) fn apply_enabled(&self, cfg: &Configuration, mv: &Move) -> Configuration {
        let mut next = cfg.clone();
        match mv {
            Move::Delay => next.interval += 1,
            Move::RevealSecret { secret, length, .. } => {
                next.secrets
                    .insert(secret.clone(), SecretState::Revealed(*length));
            }
            Move::Authorize { participant, path } => {
                next.auths.insert(Authorization {
                    participant: participant.clone(),
                    path: path.clone(),
                });
            }
            Move::Fire { cid, path } => {
                let pos = next
                    .active
                    .iter()
                    .position(|a| &a.cid == cid && a.node == path.node)
                    .expect("fired contract is active");
                let ac = next.active.remove(pos);
                let branch = self
                    .spec
                    .contract
                    .branch_at(&path.branch_root())
                    .expect("fired branch exists");
                match branch.core() {
                    Branch::Withdraw(p) => {
                        let d = HeldDeposit {
                            owner: p.clone(),
                            value: ac.balance,
                        };
                        let at = next.deposits.partition_point(|x| x <= &d);
                        next.deposits.insert(at, d);
                    }
                    Branch::Split(arms) => {
                        for (k, arm) in arms.iter().enumerate() {
                            next.active.push(ActiveContract {
                                cid: ac.cid.child(k),
                                node: path.node.child(path.choice, k),
                                balance: arm.value,
                            });
                        }
                        next.active.sort();
                    }
                    Branch::Reveal { .. } => {
                        next.active.push(ActiveContract {
                            cid: ac.cid,
                            node: path.node.child(path.choice, 0),
                            balance: ac.balance,
                        });
                        next.active.sort();
                    }
                    Branch::Auth(..) | Branch::After(..) => unreachable!("core is unguarded"),
                }
            }
        }
        next
    }
}

/// Convenience wrapper for [`Lts::initial`].
pub fn initial_configuration(spec: &ContractSpec, lengths: LengthAssignment) -> Configuration {
    Lts::new(spec, lengths).initial()
}
