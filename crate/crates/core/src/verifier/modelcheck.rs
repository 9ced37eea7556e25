//! Fair emptiness check of the product of a state graph and a Büchi automaton.
//!
//! Every configuration may stutter, which models participants who never act
//! and extends deadlocked traces to infinite ones. Weak fairness on
//! guaranteed moves is checked per strongly connected component: a component
//! supports a fair cycle iff every guaranteed move enabled in all of its
//! configurations labels one of its internal edges.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::semantics::Move;

use super::buchi::Buchi;
use super::graph::StateGraph;
use super::Lasso;

/// Product edge label: index into the state's edge list, or a stutter step.
type Label = Option<usize>;

struct Product {
    /// (state, automaton node)
    nodes: Vec<(usize, usize)>,
    succ: Vec<Vec<(usize, Label)>>,
    /// BFS tree from the initial nodes.
    parent: Vec<Option<(usize, Label)>>,
}

fn build_product(g: &StateGraph, a: &Buchi) -> Product {
    let mut p = Product {
        nodes: Vec::new(),
        succ: Vec::new(),
        parent: Vec::new(),
    };
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    for q in a.initial() {
        if a.nodes[q].accepts(&g.states[0]) {
            index.insert((0, q), p.nodes.len());
            queue.push_back(p.nodes.len());
            p.nodes.push((0, q));
            p.parent.push(None);
        }
    }
    while let Some(n) = queue.pop_front() {
        let (s, q) = p.nodes[n];
        let moves = g.edges[s]
            .iter()
            .enumerate()
            .map(|(i, e)| (e.target, Some(i)))
            .chain(std::iter::once((s, None)));
        let mut succ = Vec::new();
        for (t, label) in moves {
            for &q2 in &a.successors[q] {
                if !a.nodes[q2].accepts(&g.states[t]) {
                    continue;
                }
                let id = *index.entry((t, q2)).or_insert_with(|| {
                    let id = p.nodes.len();
                    p.nodes.push((t, q2));
                    p.parent.push(Some((n, label)));
                    queue.push_back(id);
                    id
                });
                succ.push((id, label));
            }
        }
        p.succ.push(succ);
    }
    p
}

/// Strongly connected components in the order Tarjan's algorithm closes them.
fn tarjan(succ: &[Vec<(usize, Label)>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut sccs = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next successor position)
        let mut call = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if let Some(&(w, _)) = succ[v].get(*i) {
                *i += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(u, _)) = call.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == index[v] {
                let mut scc = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    scc.push(w);
                    if w == v {
                        break;
                    }
                }
                scc.sort_unstable();
                sccs.push(scc);
            }
        }
    }
    sccs
}

/// Edges of the product between members of `members`.
fn internal<'a>(
    p: &'a Product,
    members: &'a [bool],
    scc: &'a [usize],
) -> impl Iterator<Item = (usize, usize, Label)> + 'a {
    scc.iter()
        .flat_map(move |&u| p.succ[u].iter().map(move |&(v, l)| (u, v, l)))
        .filter(move |&(_, v, _)| members[v])
}

/// Shortest path inside the component, as (label, node) steps after `from`.
fn path_within(p: &Product, members: &[bool], from: usize, to: usize) -> Vec<(Label, usize)> {
    if from == to {
        return Vec::new();
    }
    let mut prev: HashMap<usize, (usize, Label)> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &(v, l) in &p.succ[u] {
            if !members[v] || v == from || prev.contains_key(&v) {
                continue;
            }
            prev.insert(v, (u, l));
            if v == to {
                let mut steps = Vec::new();
                let mut cur = to;
                while cur != from {
                    let (u, l) = prev[&cur];
                    steps.push((l, cur));
                    cur = u;
                }
                steps.reverse();
                return steps;
            }
            queue.push_back(v);
        }
    }
    unreachable!("nodes of one component are mutually reachable")
}

/// A fair accepting lasso of the product, projected to the state graph.
/// `negated` must accept the words violating the checked property.
pub fn find_counterexample(g: &StateGraph, negated: &Buchi) -> Option<Lasso> {
    let p = build_product(g, negated);
    let mut members = vec![false; p.nodes.len()];
    for scc in tarjan(&p.succ) {
        for &u in &scc {
            members[u] = true;
        }
        if let Some(goals) = fair_cycle(g, negated, &p, &members, &scc) {
            return Some(lasso(g, &p, &members, &scc, goals));
        }
        for &u in &scc {
            members[u] = false;
        }
    }
    None
}

/// Checkpoints a fair accepting cycle must pass: nodes to visit and edges to take.
enum Goal {
    Visit(usize),
    Take(usize, usize, Label),
}

fn fair_cycle(
    g: &StateGraph,
    a: &Buchi,
    p: &Product,
    members: &[bool],
    scc: &[usize],
) -> Option<Vec<Goal>> {
    let edges: Vec<_> = internal(p, members, scc).collect();
    if edges.is_empty() {
        return None;
    }
    let mut goals = Vec::new();
    for set in &a.acceptance {
        goals.push(Goal::Visit(
            *scc.iter().find(|&&u| set.contains(&p.nodes[u].1))?,
        ));
    }
    let states: BTreeSet<usize> = scc.iter().map(|&u| p.nodes[u].0).collect();
    let mut required: Option<BTreeSet<&Move>> = None;
    for &s in &states {
        let here: BTreeSet<&Move> = g.guaranteed(s).map(|e| &e.mv).collect();
        required = Some(match required {
            None => here,
            Some(r) => r.intersection(&here).copied().collect(),
        });
    }
    for m in required.unwrap_or_default() {
        let &(u, v, l) = edges
            .iter()
            .find(|&&(u, _, l)| l.is_some_and(|i| &g.edges[p.nodes[u].0][i].mv == m))?;
        goals.push(Goal::Take(u, v, l));
    }
    if goals.is_empty() {
        let (u, v, l) = edges[0];
        goals.push(Goal::Take(u, v, l));
    }
    Some(goals)
}

fn lasso(g: &StateGraph, p: &Product, members: &[bool], scc: &[usize], goals: Vec<Goal>) -> Lasso {
    // Prefix: BFS tree path to the component member closest to the start.
    let entry = scc[0];
    let mut prefix = vec![(None, entry)];
    let mut cur = entry;
    while let Some((u, l)) = p.parent[cur] {
        prefix.push((l, u));
        cur = u;
    }
    prefix.reverse();
    // prefix[i] = (label of the edge leaving node i, node i)
    let mut nodes: Vec<usize> = prefix.iter().map(|&(_, n)| n).collect();
    let mut labels: Vec<Label> = prefix[..prefix.len() - 1].iter().map(|&(l, _)| l).collect();
    let loop_start = nodes.len() - 1;
    let mut at = entry;
    let mut cycle: Vec<(Label, usize)> = Vec::new();
    for goal in goals {
        match goal {
            Goal::Visit(n) => {
                cycle.extend(path_within(p, members, at, n));
                at = n;
            }
            Goal::Take(u, v, l) => {
                cycle.extend(path_within(p, members, at, u));
                cycle.push((l, v));
                at = v;
            }
        }
    }
    cycle.extend(path_within(p, members, at, entry));
    if cycle.is_empty() {
        // Every goal was the entry itself without an edge; close with any internal edge.
        let (_, v, l) = internal(p, members, scc)
            .find(|&(u, _, _)| u == entry)
            .expect("nontrivial component");
        cycle.push((l, v));
        cycle.extend(path_within(p, members, v, entry));
    }
    // The cycle ends back at `entry`, which is already the last prefix node.
    for (i, (l, n)) in cycle.iter().enumerate() {
        labels.push(*l);
        if i + 1 < cycle.len() {
            nodes.push(*n);
        }
    }
    let states = nodes
        .iter()
        .map(|&n| g.states[p.nodes[n].0].clone())
        .collect();
    let moves = nodes
        .iter()
        .zip(&labels)
        .map(|(&n, l)| l.map(|i| g.edges[p.nodes[n].0][i].mv.clone()))
        .collect();
    Lasso {
        states,
        moves,
        loop_start,
    }
}
