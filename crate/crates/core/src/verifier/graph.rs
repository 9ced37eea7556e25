//! Explicit reachable state graph of a pruned transition system.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::semantics::{Configuration, Lts, Move, MoveClass};

use super::strategy::{classify_move, Strategies};
use super::{VerifyError, VerifyOptions};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    #[serde(rename = "move")]
    pub mv: Move,
    pub class: MoveClass,
    pub target: usize,
}

/// States in BFS order from the initial configuration (index 0). Prohibited
/// moves have no edges.
#[derive(Debug, Clone, Default)]
pub struct StateGraph {
    pub states: Vec<Configuration>,
    pub edges: Vec<Vec<Edge>>,
    /// BFS tree: predecessor state and the index of the edge taken there.
    pub parent: Vec<Option<(usize, usize)>>,
}

impl StateGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Moves along the BFS tree from the initial state to `state`.
    pub fn trace_to(&self, mut state: usize) -> Vec<Move> {
        let mut moves = Vec::new();
        while let Some((p, e)) = self.parent[state] {
            moves.push(self.edges[p][e].mv.clone());
            state = p;
        }
        moves.reverse();
        moves
    }

    /// Guaranteed moves enabled at `state`.
    pub fn guaranteed(&self, state: usize) -> impl Iterator<Item = &Edge> {
        self.edges[state]
            .iter()
            .filter(|e| e.class == MoveClass::Guaranteed)
    }
}

/// Classified, non-prohibited moves of `cfg`.
pub(crate) fn successors(
    lts: &Lts<'_>,
    strategies: &Strategies,
    options: &VerifyOptions,
    cfg: &Configuration,
) -> Vec<(Move, MoveClass)> {
    let mut out: Vec<(Move, MoveClass)> = lts
        .enumerate_moves(cfg)
        .into_iter()
        .map(|m| {
            let c = classify_move(&m, strategies, cfg, lts.partition());
            (m, c)
        })
        .filter(|(_, c)| *c != MoveClass::Prohibited)
        .collect();
    if options.urgent
        && out
            .iter()
            .any(|(m, c)| *c == MoveClass::Guaranteed && *m != Move::Delay)
    {
        out.retain(|(m, _)| *m != Move::Delay);
    }
    out
}

/// Explores every configuration reachable through guaranteed and adversarial moves.
pub fn reachable_states(
    lts: &Lts<'_>,
    strategies: &Strategies,
    options: &VerifyOptions,
) -> Result<StateGraph, VerifyError> {
    let mut g = StateGraph::default();
    let mut index: HashMap<Configuration, usize> = HashMap::new();
    let init = lts.initial();
    let total = init.total_value();
    index.insert(init.clone(), 0);
    g.states.push(init);
    g.parent.push(None);
    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        let cfg = g.states[s].clone();
        let mut edges = Vec::new();
        for (mv, class) in successors(lts, strategies, options, &cfg) {
            let next = lts.apply_enabled(&cfg, &mv);
            debug_assert_eq!(next.total_value(), total, "value is conserved");
            let target = match index.entry(next) {
                Entry::Occupied(o) => *o.get(),
                Entry::Vacant(v) => {
                    if g.states.len() >= options.state_limit {
                        return Err(VerifyError::StateLimitExceeded {
                            limit: options.state_limit,
                        });
                    }
                    let t = g.states.len();
                    g.states.push(v.key().clone());
                    v.insert(t);
                    g.parent.push(Some((s, edges.len())));
                    queue.push_back(t);
                    t
                }
            };
            edges.push(Edge { mv, class, target });
        }
        g.edges.push(edges);
    }
    Ok(g)
}
