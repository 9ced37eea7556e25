//! LTL formulas over configuration atoms.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::semantics::{atom_holds, Atom, Configuration};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    /// Dual of until; produced by negation normal form.
    Release(Box<Formula>, Box<Formula>),
    Globally(Box<Formula>),
    Finally(Box<Formula>),
}

impl Formula {
    pub fn atom(a: Atom) -> Self {
        Formula::Atom(a)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn globally(f: Formula) -> Self {
        Formula::Globally(Box::new(f))
    }

    pub fn finally(f: Formula) -> Self {
        Formula::Finally(Box::new(f))
    }

    /// True when the formula has no temporal operator.
    pub fn is_state_formula(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(a) => a.is_state_formula(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.is_state_formula() && b.is_state_formula()
            }
            _ => false,
        }
    }

    /// Evaluates a state formula; temporal operators are rejected.
    pub fn holds_in(&self, cfg: &Configuration) -> Option<bool> {
        Some(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => atom_holds(cfg, a),
            Formula::Not(a) => !a.holds_in(cfg)?,
            Formula::And(a, b) => a.holds_in(cfg)? && b.holds_in(cfg)?,
            Formula::Or(a, b) => a.holds_in(cfg)? || b.holds_in(cfg)?,
            Formula::Implies(a, b) => !a.holds_in(cfg)? || b.holds_in(cfg)?,
            _ => return None,
        })
    }

    /// Negation normal form over {true, false, atoms, !atom, /\, \/, X, U, R}.
    pub fn nnf(&self) -> Formula {
        self.nnf_polarity(true)
    }

    fn nnf_polarity(&self, positive: bool) -> Formula {
        use Formula::*;
        let b = Box::new;
        match (self, positive) {
            (True, true) | (False, false) => True,
            (False, true) | (True, false) => False,
            (Atom(a), true) => Atom(a.clone()),
            (Atom(a), false) => Not(b(Atom(a.clone()))),
            (Not(f), p) => f.nnf_polarity(!p),
            (And(x, y), true) | (Or(x, y), false) => {
                And(b(x.nnf_polarity(positive)), b(y.nnf_polarity(positive)))
            }
            (Or(x, y), true) | (And(x, y), false) => {
                Or(b(x.nnf_polarity(positive)), b(y.nnf_polarity(positive)))
            }
            (Implies(x, y), true) => Or(b(x.nnf_polarity(false)), b(y.nnf_polarity(true))),
            (Implies(x, y), false) => And(b(x.nnf_polarity(true)), b(y.nnf_polarity(false))),
            (Next(f), p) => Next(b(f.nnf_polarity(p))),
            (Until(x, y), true) => Until(b(x.nnf_polarity(true)), b(y.nnf_polarity(true))),
            (Until(x, y), false) => Release(b(x.nnf_polarity(false)), b(y.nnf_polarity(false))),
            (Release(x, y), true) => Release(b(x.nnf_polarity(true)), b(y.nnf_polarity(true))),
            (Release(x, y), false) => Until(b(x.nnf_polarity(false)), b(y.nnf_polarity(false))),
            (Finally(f), true) | (Globally(f), false) => {
                Until(b(True), b(f.nnf_polarity(positive)))
            }
            (Globally(f), true) | (Finally(f), false) => {
                Release(b(False), b(f.nnf_polarity(positive)))
            }
        }
    }

    /// Evaluates the formula at position 0 of the ultimately periodic word
    /// `states[0..loop_start] (states[loop_start..])^omega`.
    pub fn holds_on_lasso(&self, states: &[Configuration], loop_start: usize) -> bool {
        assert!(loop_start < states.len(), "lasso needs a nonempty cycle");
        self.lasso_values(states, loop_start)[0]
    }

    fn lasso_values(&self, states: &[Configuration], loop_start: usize) -> Vec<bool> {
        let n = states.len();
        let succ = |i: usize| if i + 1 < n { i + 1 } else { loop_start };
        // Least (until) or greatest (release) fixpoint of
        // v[i] = now[i] || (keep[i] && v[succ i])  resp.  now[i] && (keep[i] || v[succ i]).
        let fixpoint = |init: bool, step: &dyn Fn(usize, &[bool]) -> bool| {
            let mut v = vec![init; n];
            loop {
                let mut changed = false;
                for i in (0..n).rev() {
                    let x = step(i, &v);
                    if x != v[i] {
                        v[i] = x;
                        changed = true;
                    }
                }
                if !changed {
                    return v;
                }
            }
        };
        match self {
            Formula::True => vec![true; n],
            Formula::False => vec![false; n],
            Formula::Atom(a) => states.iter().map(|s| atom_holds(s, a)).collect(),
            Formula::Not(f) => f
                .lasso_values(states, loop_start)
                .iter()
                .map(|x| !x)
                .collect(),
            Formula::And(x, y) | Formula::Or(x, y) | Formula::Implies(x, y) => {
                let a = x.lasso_values(states, loop_start);
                let b = y.lasso_values(states, loop_start);
                (0..n)
                    .map(|i| match self {
                        Formula::And(..) => a[i] && b[i],
                        Formula::Or(..) => a[i] || b[i],
                        _ => !a[i] || b[i],
                    })
                    .collect()
            }
            Formula::Next(f) => {
                let a = f.lasso_values(states, loop_start);
                (0..n).map(|i| a[succ(i)]).collect()
            }
            Formula::Until(x, y) => {
                let a = x.lasso_values(states, loop_start);
                let b = y.lasso_values(states, loop_start);
                fixpoint(false, &|i, v| b[i] || (a[i] && v[succ(i)]))
            }
            Formula::Release(x, y) => {
                let a = x.lasso_values(states, loop_start);
                let b = y.lasso_values(states, loop_start);
                fixpoint(true, &|i, v| b[i] && (a[i] || v[succ(i)]))
            }
            Formula::Finally(f) => {
                let a = f.lasso_values(states, loop_start);
                fixpoint(false, &|i, v| a[i] || v[succ(i)])
            }
            Formula::Globally(f) => {
                let a = f.lasso_values(states, loop_start);
                fixpoint(true, &|i, v| a[i] && v[succ(i)])
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Until(..) | Formula::Release(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, child: &Formula, min: u8| -> fmt::Result {
            if child.precedence() < min {
                write!(f, "({child})")
            } else {
                write!(f, "{child}")
            }
        };
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(a) => {
                f.write_str("!")?;
                wrap(f, a, 5)
            }
            Formula::Next(a) => {
                f.write_str("X ")?;
                wrap(f, a, 5)
            }
            Formula::Globally(a) => {
                f.write_str("[]")?;
                wrap(f, a, 5)
            }
            Formula::Finally(a) => {
                f.write_str("<>")?;
                wrap(f, a, 5)
            }
            Formula::And(a, b) => {
                wrap(f, a, 4)?;
                f.write_str(" /\\ ")?;
                wrap(f, b, 3)
            }
            Formula::Or(a, b) => {
                wrap(f, a, 3)?;
                f.write_str(" \\/ ")?;
                wrap(f, b, 2)
            }
            Formula::Implies(a, b) => {
                wrap(f, a, 2)?;
                f.write_str(" => ")?;
                wrap(f, b, 1)
            }
            Formula::Until(a, b) => {
                wrap(f, a, 5)?;
                f.write_str(" U ")?;
                wrap(f, b, 4)
            }
            Formula::Release(a, b) => {
                // No surface syntax: print through the until dual.
                write!(f, "!(!")?;
                wrap(f, a, 5)?;
                f.write_str(" U !")?;
                wrap(f, b, 5)?;
                f.write_str(")")
            }
        }
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
