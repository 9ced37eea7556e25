//! Liquidity as double reachability.

use std::collections::VecDeque;

use crate::ast::Satoshi;

use super::graph::StateGraph;

/// States that reach a liquidated configuration through guaranteed moves.
pub fn can_liquidate(g: &StateGraph, epsilon: Satoshi) -> Vec<bool> {
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); g.len()];
    for s in 0..g.len() {
        for e in g.guaranteed(s) {
            preds[e.target].push(s);
        }
    }
    let mut good = vec![false; g.len()];
    let mut queue = VecDeque::new();
    for (s, cfg) in g.states.iter().enumerate() {
        if cfg.active_balance() <= epsilon {
            good[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        for &p in &preds[s] {
            if !good[p] {
                good[p] = true;
                queue.push_back(p);
            }
        }
    }
    good
}

/// The first state in BFS order that cannot be liquidated, if any.
pub fn frozen_state(g: &StateGraph, epsilon: Satoshi) -> Option<usize> {
    can_liquidate(g, epsilon).iter().position(|ok| !ok)
}
