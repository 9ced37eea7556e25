//! Script expression trees and witness slots.

use std::fmt;

use serde::Serialize;

use crate::ast::{Hash256, PubKey};
use crate::hash::sha256;

/// Bytes added to every secret preimage: a secret of abstract length `n` is
/// committed as a preimage of `ETA + n` bytes.
pub const ETA: u64 = 16;

const KEY_TAG: &[u8] = b"bitml-branch-key";

/// A participant key for one use inside the contract.
///
/// Branch keys are derived deterministically from the participant's declared
/// key and a derivation path; the empty path denotes the declared key itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct KeyRef {
    pub participant: String,
    pub path: String,
    pub pubkey: PubKey,
}

impl KeyRef {
    pub fn declared(participant: &str, pubkey: PubKey) -> Self {
        KeyRef {
            participant: participant.to_string(),
            path: String::new(),
            pubkey,
        }
    }

    /// Derived test key: `secret = sha256(tag ‖ pubkey ‖ path)`,
    /// `pubkey = 02 ‖ sha256(tag ‖ secret)`.
    pub fn derive(participant: &str, base: &PubKey, path: &str) -> Self {
        let secret = sha256(&[KEY_TAG, &base.0, path.as_bytes()].concat());
        let mut pk = [0u8; 33];
        pk[0] = 0x02;
        pk[1..].copy_from_slice(&sha256(&[KEY_TAG, &secret].concat()));
        KeyRef {
            participant: participant.to_string(),
            path: path.to_string(),
            pubkey: PubKey(pk),
        }
    }
}

impl fmt::Display for KeyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.participant)
        } else {
            write!(f, "{}@{}", self.participant, self.path)
        }
    }
}

/// A value supplied by the spender.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "slot", rename_all = "snake_case")]
pub enum Slot {
    Sig {
        key: KeyRef,
    },
    Preimage {
        secret: String,
    },
    /// Index of the disjunct being satisfied.
    Selector,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Sig { key } => write!(f, "sig({key})"),
            Slot::Preimage { secret } => write!(f, "preimage({secret})"),
            Slot::Selector => f.write_str("selector"),
        }
    }
}

/// Integer terms over witness sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum SizeTerm {
    Const {
        value: i64,
    },
    Size {
        slot: Slot,
    },
    Add {
        left: Box<SizeTerm>,
        right: Box<SizeTerm>,
    },
    Sub {
        left: Box<SizeTerm>,
        right: Box<SizeTerm>,
    },
}

/// Boolean conditions over size terms, mirroring contract predicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "pred", rename_all = "snake_case")]
pub enum SizePred {
    True,
    Not {
        arg: Box<SizePred>,
    },
    And {
        left: Box<SizePred>,
        right: Box<SizePred>,
    },
    Or {
        left: Box<SizePred>,
        right: Box<SizePred>,
    },
    Eq {
        left: SizeTerm,
        right: SizeTerm,
    },
    Lt {
        left: SizeTerm,
        right: SizeTerm,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptExpr {
    True,
    CheckSig {
        key: KeyRef,
    },
    CheckMultiAll {
        keys: Vec<KeyRef>,
    },
    PreimageHashEq {
        slot: Slot,
        hash: Hash256,
    },
    SizeEq {
        slot: Slot,
        size: u64,
    },
    SizeAtLeast {
        slot: Slot,
        size: u64,
    },
    SizeCmp {
        pred: SizePred,
    },
    And {
        args: Vec<ScriptExpr>,
    },
    /// Disjunction; only allowed at the root of a script, where a selector
    /// slot picks the disjunct.
    Or {
        args: Vec<ScriptExpr>,
    },
}

impl SizeTerm {
    fn slots_into(&self, out: &mut Vec<Slot>) {
        match self {
            SizeTerm::Const { .. } => {}
            SizeTerm::Size { slot } => push_unique(out, slot),
            SizeTerm::Add { left, right } | SizeTerm::Sub { left, right } => {
                left.slots_into(out);
                right.slots_into(out);
            }
        }
    }
}

impl SizePred {
    fn slots_into(&self, out: &mut Vec<Slot>) {
        match self {
            SizePred::True => {}
            SizePred::Not { arg } => arg.slots_into(out),
            SizePred::And { left, right } | SizePred::Or { left, right } => {
                left.slots_into(out);
                right.slots_into(out);
            }
            SizePred::Eq { left, right } | SizePred::Lt { left, right } => {
                left.slots_into(out);
                right.slots_into(out);
            }
        }
    }
}

fn push_unique(out: &mut Vec<Slot>, s: &Slot) {
    if !out.contains(s) {
        out.push(s.clone());
    }
}

impl ScriptExpr {
    /// Witness slots in first-use order; a root disjunction puts the
    /// selector first.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        if let ScriptExpr::Or { .. } = self {
            out.push(Slot::Selector);
        }
        self.slots_into(&mut out);
        out
    }

    fn slots_into(&self, out: &mut Vec<Slot>) {
        match self {
            ScriptExpr::True => {}
            ScriptExpr::CheckSig { key } => push_unique(out, &Slot::Sig { key: key.clone() }),
            ScriptExpr::CheckMultiAll { keys } => {
                for key in keys {
                    push_unique(out, &Slot::Sig { key: key.clone() });
                }
            }
            ScriptExpr::PreimageHashEq { slot, .. }
            | ScriptExpr::SizeEq { slot, .. }
            | ScriptExpr::SizeAtLeast { slot, .. } => push_unique(out, slot),
            ScriptExpr::SizeCmp { pred } => pred.slots_into(out),
            ScriptExpr::And { args } | ScriptExpr::Or { args } => {
                for a in args {
                    a.slots_into(out);
                }
            }
        }
    }

    /// The disjuncts of a root disjunction, or the expression itself.
    pub fn disjuncts(&self) -> &[ScriptExpr] {
        match self {
            ScriptExpr::Or { args } => args,
            e => std::slice::from_ref(e),
        }
    }

    /// The conjuncts of a conjunction, or the expression itself.
    pub fn conjuncts(&self) -> &[ScriptExpr] {
        match self {
            ScriptExpr::And { args } => args,
            e => std::slice::from_ref(e),
        }
    }
}
