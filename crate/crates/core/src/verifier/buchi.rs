//! Tableau translation of LTL to generalized Büchi automata.
//!
//! The construction follows Gerth, Peled, Vardi and Wolper: nodes carry the
//! literals that must hold in the state they read, and one acceptance set is
//! produced per until subformula.

use std::collections::BTreeSet;

use crate::semantics::{atom_holds, Configuration};

use super::ltl::Formula;

/// Index of the pseudo-node that precedes every initial node.
const INIT: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct BuchiNode {
    pub incoming: BTreeSet<usize>,
    /// Literals in negation normal form: `true`, atoms and negated atoms.
    pub literals: Vec<Formula>,
    old: BTreeSet<Formula>,
    next: BTreeSet<Formula>,
}

impl BuchiNode {
    pub fn is_initial(&self) -> bool {
        self.incoming.contains(&INIT)
    }

    pub fn accepts(&self, cfg: &Configuration) -> bool {
        self.literals.iter().all(|l| match l {
            Formula::True => true,
            Formula::Atom(a) => atom_holds(cfg, a),
            Formula::Not(a) => match a.as_ref() {
                Formula::Atom(a) => !atom_holds(cfg, a),
                _ => unreachable!("literal"),
            },
            _ => unreachable!("literal"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Buchi {
    pub nodes: Vec<BuchiNode>,
    /// `successors[q]`: nodes reachable in one step from `q`.
    pub successors: Vec<Vec<usize>>,
    /// One set per until subformula; a run is accepting if it visits each
    /// set infinitely often.
    pub acceptance: Vec<BTreeSet<usize>>,
}

struct Pending {
    incoming: BTreeSet<usize>,
    new: Vec<Formula>,
    old: BTreeSet<Formula>,
    next: BTreeSet<Formula>,
}

fn is_contradiction(f: &Formula, old: &BTreeSet<Formula>) -> bool {
    match f {
        Formula::False => true,
        Formula::Atom(_) => old.contains(&Formula::not(f.clone())),
        Formula::Not(a) => old.contains(a.as_ref()),
        _ => false,
    }
}

fn expand(p: Pending, nodes: &mut Vec<BuchiNode>) {
    let mut stack = vec![p];
    while let Some(mut p) = stack.pop() {
        let Some(f) = p.new.pop() else {
            if let Some(n) = nodes
                .iter_mut()
                .find(|n| n.old == p.old && n.next == p.next)
            {
                n.incoming.extend(p.incoming);
                continue;
            }
            let id = nodes.len();
            let literals = p
                .old
                .iter()
                .filter(|f| matches!(f, Formula::True | Formula::Atom(_) | Formula::Not(_)))
                .cloned()
                .collect();
            nodes.push(BuchiNode {
                incoming: p.incoming,
                literals,
                old: p.old,
                next: p.next.clone(),
            });
            stack.push(Pending {
                incoming: BTreeSet::from([id]),
                new: p.next.into_iter().collect(),
                old: BTreeSet::new(),
                next: BTreeSet::new(),
            });
            continue;
        };
        if p.old.contains(&f) {
            stack.push(p);
            continue;
        }
        match &f {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::Not(_) => {
                if !is_contradiction(&f, &p.old) {
                    p.old.insert(f);
                    stack.push(p);
                }
            }
            Formula::And(a, b) => {
                p.new.push((**a).clone());
                p.new.push((**b).clone());
                p.old.insert(f);
                stack.push(p);
            }
            Formula::Next(a) => {
                p.next.insert((**a).clone());
                p.old.insert(f);
                stack.push(p);
            }
            Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                // Two successors: (new1, next1) and new2.
                let (new1, next1, new2): (Vec<Formula>, Option<Formula>, Vec<Formula>) = match &f {
                    Formula::Or(..) => (vec![(**a).clone()], None, vec![(**b).clone()]),
                    Formula::Until(..) => {
                        (vec![(**a).clone()], Some(f.clone()), vec![(**b).clone()])
                    }
                    _ => (
                        vec![(**b).clone()],
                        Some(f.clone()),
                        vec![(**a).clone(), (**b).clone()],
                    ),
                };
                let mut old = p.old;
                old.insert(f);
                let mut first = Pending {
                    incoming: p.incoming.clone(),
                    new: p.new.clone(),
                    old: old.clone(),
                    next: p.next.clone(),
                };
                first
                    .new
                    .extend(new1.into_iter().filter(|g| !first.old.contains(g)));
                first.next.extend(next1);
                let mut second = Pending {
                    incoming: p.incoming,
                    new: p.new,
                    old,
                    next: p.next,
                };
                second
                    .new
                    .extend(new2.into_iter().filter(|g| !second.old.contains(g)));
                stack.push(second);
                stack.push(first);
            }
            Formula::Implies(..) | Formula::Globally(_) | Formula::Finally(_) => {
                unreachable!("input is in negation normal form")
            }
        }
    }
}

fn untils(f: &Formula, out: &mut BTreeSet<Formula>) {
    match f {
        Formula::Until(a, b) => {
            out.insert(f.clone());
            untils(a, out);
            untils(b, out);
        }
        Formula::Not(a) | Formula::Next(a) | Formula::Globally(a) | Formula::Finally(a) => {
            untils(a, out)
        }
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Implies(a, b)
        | Formula::Release(a, b) => {
            untils(a, out);
            untils(b, out);
        }
        Formula::True | Formula::False | Formula::Atom(_) => {}
    }
}

impl Buchi {
    /// Automaton accepting exactly the words that satisfy `f`.
    pub fn from_formula(f: &Formula) -> Buchi {
        let f = f.nnf();
        let mut nodes = Vec::new();
        expand(
            Pending {
                incoming: BTreeSet::from([INIT]),
                new: vec![f.clone()],
                old: BTreeSet::new(),
                next: BTreeSet::new(),
            },
            &mut nodes,
        );
        let mut successors = vec![Vec::new(); nodes.len()];
        for (j, n) in nodes.iter().enumerate() {
            for &i in &n.incoming {
                if i != INIT {
                    successors[i].push(j);
                }
            }
        }
        let mut us = BTreeSet::new();
        untils(&f, &mut us);
        let acceptance = us
            .iter()
            .map(|u| {
                let Formula::Until(_, b) = u else {
                    unreachable!()
                };
                (0..nodes.len())
                    .filter(|&q| !nodes[q].old.contains(u) || nodes[q].old.contains(b.as_ref()))
                    .collect()
            })
            .collect();
        Buchi {
            nodes,
            successors,
            acceptance,
        }
    }

    pub fn initial(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&q| self.nodes[q].is_initial())
    }
}
