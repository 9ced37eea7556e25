//! Participant strategies and move classification.
//!
//! A participant without a strategy behaves adversarially: each of their
//! reveals and authorizations may or may not happen. A declared strategy
//! fully specifies their behaviour: listed actions happen once their condition
//! holds, everything else never happens.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{Branch, BranchPath, ContractSpec};
use crate::semantics::{Configuration, Move, MoveClass, TimePartition};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Reveal { secret: String },
    Authorize { path: BranchPath },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "cond", rename_all = "snake_case")]
pub enum Cond {
    True,
    Revealed {
        secret: String,
    },
    Authorized {
        participant: String,
        path: BranchPath,
    },
    TimeReached {
        height: u64,
    },
    And {
        left: Box<Cond>,
        right: Box<Cond>,
    },
}

impl Cond {
    pub fn holds(&self, cfg: &Configuration, partition: &TimePartition) -> bool {
        match self {
            Cond::True => true,
            Cond::Revealed { secret } => cfg.is_revealed(secret),
            Cond::Authorized { participant, path } => cfg.is_authorized(participant, path),
            Cond::TimeReached { height } => partition.lower_bound(cfg.interval) >= *height,
            Cond::And { left, right } => left.holds(cfg, partition) && right.holds(cfg, partition),
        }
    }

    fn heights(&self, out: &mut Vec<u64>) {
        match self {
            Cond::TimeReached { height } => out.push(*height),
            Cond::And { left, right } => {
                left.heights(out);
                right.heights(out);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Rule {
    pub action: Action,
    pub condition: Cond,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Strategy {
    pub participant: String,
    pub rules: Vec<Rule>,
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::True => f.write_str("true"),
            Cond::Revealed { secret } => write!(f, "(revealed {secret})"),
            Cond::Authorized { participant, path } => {
                write!(f, "(authorized \"{participant}\" {path})")
            }
            Cond::TimeReached { height } => write!(f, "(time>= {height})"),
            Cond::And { left, right } => write!(f, "(and {left} {right})"),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rules.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "(strategy \"{}\" ", self.participant)?;
            match &r.action {
                Action::Reveal { secret } => write!(f, "(do-reveal {secret})")?,
                Action::Authorize { path } => write!(f, "(do-auth {path})")?,
            }
            if r.condition != Cond::True {
                write!(f, " (if {})", r.condition)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("strategy for undeclared participant `{0}`")]
    UnknownParticipant(String),
    #[error("`{participant}` cannot reveal `{secret}`: not their committed secret")]
    NotOwnSecret { participant: String, secret: String },
    #[error("`{participant}` cannot authorize {path}: no auth guard of theirs there")]
    NotOwnAuthorization {
        participant: String,
        path: BranchPath,
    },
}

/// The set of declared strategies, at most one per participant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Strategies {
    by_participant: BTreeMap<String, Strategy>,
}

impl Strategies {
    pub fn none() -> Self {
        Self::default()
    }

    /// Merges strategies; rules for the same participant are concatenated.
    pub fn from_list(list: impl IntoIterator<Item = Strategy>) -> Self {
        let mut s = Self::default();
        for st in list {
            s.add(st);
        }
        s
    }

    pub fn add(&mut self, strategy: Strategy) {
        self.by_participant
            .entry(strategy.participant.clone())
            .or_insert_with(|| Strategy {
                participant: strategy.participant.clone(),
                rules: Vec::new(),
            })
            .rules
            .extend(strategy.rules);
    }

    pub fn get(&self, participant: &str) -> Option<&Strategy> {
        self.by_participant.get(participant)
    }

    pub fn is_empty(&self) -> bool {
        self.by_participant.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Strategy> {
        self.by_participant.values()
    }

    /// Heights mentioned by `time>=` conditions.
    pub fn time_thresholds(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for s in self.iter() {
            for r in &s.rules {
                r.condition.heights(&mut out);
            }
        }
        out
    }

    /// Checks that every rule only controls its participant's own moves.
    pub fn validate(&self, spec: &ContractSpec) -> Result<(), StrategyError> {
        for s in self.iter() {
            if spec.participant(&s.participant).is_none() {
                return Err(StrategyError::UnknownParticipant(s.participant.clone()));
            }
            for r in &s.rules {
                match &r.action {
                    Action::Reveal { secret } => {
                        let owned = spec
                            .precondition
                            .secret(secret)
                            .is_some_and(|c| c.owner == s.participant);
                        if !owned {
                            return Err(StrategyError::NotOwnSecret {
                                participant: s.participant.clone(),
                                secret: secret.clone(),
                            });
                        }
                    }
                    Action::Authorize { path } => {
                        let own = matches!(
                            spec.contract.branch_at(path),
                            Some(Branch::Auth(p, _)) if *p == s.participant
                        );
                        if !own {
                            return Err(StrategyError::NotOwnAuthorization {
                                participant: s.participant.clone(),
                                path: path.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Classifies a move under the declared strategies.
///
/// Delay and Fire are always guaranteed. Reveals and authorizations of a
/// participant without strategy are adversarial; with a strategy they are
/// guaranteed when a matching rule's condition holds, prohibited otherwise.
pub fn classify_move(
    mv: &Move,
    strategies: &Strategies,
    cfg: &Configuration,
    partition: &TimePartition,
) -> MoveClass {
    let (participant, action) = match mv {
        Move::Delay | Move::Fire { .. } => return MoveClass::Guaranteed,
        Move::RevealSecret {
            participant,
            secret,
            ..
        } => (
            participant,
            Action::Reveal {
                secret: secret.clone(),
            },
        ),
        Move::Authorize { participant, path } => {
            (participant, Action::Authorize { path: path.clone() })
        }
    };
    match strategies.get(participant) {
        None => MoveClass::Adversarial,
        Some(s) => {
            let fires = s
                .rules
                .iter()
                .any(|r| r.action == action && r.condition.holds(cfg, partition));
            if fires {
                MoveClass::Guaranteed
            } else {
                MoveClass::Prohibited
            }
        }
    }
}
