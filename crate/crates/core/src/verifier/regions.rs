//! Finite sampling of secret lengths.
//!
//! Each comparison `l ⋈ r` is brought to the linear form
//! `Σ c_s·|s| + c0 ⋈ 0`. With a single secret its threshold is
//! `⌊-c0 / c_s⌋`, the last length before the comparison can change value;
//! with several it is `|c0|`. Secrets that occur together in a comparison
//! share their thresholds. A secret with thresholds `K`
//! is sampled at `{0} ∪ {k, k+1 | k ∈ K}`, restricted to non-negative
//! lengths; secrets that occur in no predicate only take length 0.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{ContractSpec, Expr};
use crate::semantics::LengthAssignment;

/// Constant term and secret coefficients of a linear expression.
fn linear(e: &Expr, sign: i128, c0: &mut i128, coeffs: &mut BTreeMap<String, i128>) {
    match e {
        Expr::Const(c) => *c0 += sign * *c as i128,
        Expr::Len(s) => *coeffs.entry(s.clone()).or_default() += sign,
        Expr::Add(a, b) => {
            linear(a, sign, c0, coeffs);
            linear(b, sign, c0, coeffs);
        }
        Expr::Sub(a, b) => {
            linear(a, sign, c0, coeffs);
            linear(b, -sign, c0, coeffs);
        }
    }
}

fn find(parent: &mut BTreeMap<String, String>, s: &str) -> String {
    let p = parent.get(s).cloned().unwrap_or_else(|| s.to_string());
    if p == s {
        return p;
    }
    let root = find(parent, &p);
    parent.insert(s.to_string(), root.clone());
    root
}

/// Sample lengths of every committed secret.
pub fn sample_sets(spec: &ContractSpec) -> BTreeMap<String, Vec<u64>> {
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    let mut thresholds: Vec<(Vec<String>, i128)> = Vec::new();
    for (_, p) in spec.predicates() {
        p.visit_comparisons(&mut |l, r| {
            let mut c0 = 0i128;
            let mut coeffs = BTreeMap::new();
            linear(l, 1, &mut c0, &mut coeffs);
            linear(r, -1, &mut c0, &mut coeffs);
            coeffs.retain(|_, c| *c != 0);
            let k = match coeffs.values().collect::<Vec<_>>()[..] {
                // c·|s| + c0 ⋈ 0 flips at -c0 / c.
                [&c] if c > 0 => (-c0).div_euclid(c),
                [&c] => c0.div_euclid(-c),
                _ => c0.abs(),
            };
            let secrets: Vec<String> = coeffs.into_keys().collect();
            thresholds.push((secrets, k));
        });
    }
    for (secrets, _) in &thresholds {
        for s in secrets {
            parent.entry(s.clone()).or_insert_with(|| s.clone());
        }
        for w in secrets.windows(2) {
            let (a, b) = (find(&mut parent, &w[0]), find(&mut parent, &w[1]));
            if a != b {
                parent.insert(a, b);
            }
        }
    }
    let mut by_class: BTreeMap<String, BTreeSet<i128>> = BTreeMap::new();
    for (secrets, k) in &thresholds {
        if let Some(s) = secrets.first() {
            let root = find(&mut parent, s);
            by_class.entry(root).or_default().insert(*k);
        }
    }
    let mut out = BTreeMap::new();
    for c in &spec.precondition.secrets {
        let mut samples = BTreeSet::from([0u64]);
        if parent.contains_key(&c.name) {
            let root = find(&mut parent, &c.name);
            for k in by_class.get(&root).into_iter().flatten() {
                for v in [*k, *k + 1] {
                    if let Ok(v) = u64::try_from(v) {
                        samples.insert(v);
                    }
                }
            }
        }
        out.insert(c.name.clone(), samples.into_iter().collect());
    }
    out
}

/// One representative length assignment per region: the product of the
/// per-secret sample sets.
pub fn sample_secret_regions(spec: &ContractSpec) -> Vec<LengthAssignment> {
    let sets = sample_sets(spec);
    let mut out = vec![LengthAssignment::new()];
    for (name, samples) in &sets {
        out = out
            .into_iter()
            .flat_map(|a| {
                samples.iter().map(move |v| {
                    let mut a = a.clone();
                    a.insert(name.clone(), *v);
                    a
                })
            })
            .collect();
    }
    out
}
