//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use bitml::ast::ContractSpec;
use bitml::parser::{parse_file_str, parse_strategy};
use bitml::verifier::Strategies;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use bitml::compiler::{template_name, Source, TxDag, ETA};
use bitml::hash::hash160;
use bitml::semantics::{Atom, Configuration, Lts, Move, MoveClass};
use bitml::txwire::{
    interpret, p2pkh_script, split_script_sig, vm, Finalized, RawTx, TestChecker, TxIn, TxOut,
    Witness,
};
use bitml::verifier::classify_move;
use bitml::verifier::sample_secret_regions;
use proptest::prelude::*;
use sha2::{Digest, Sha256};

pub const BENCHMARKS: &[&str] = &[
    "escrow.bitml",
    "lottery-2-noafter.bitml",
    "lottery-2.bitml",
    "lottery-4-nonstandard.bitml",
    "lottery-4-standard.bitml",
    "mutual-tc-2.bitml",
    "mutual-tc-3.bitml",
    "mutual-tc-4.bitml",
    "mutual-tc-5.bitml",
    "mutual-tc-noafter.bitml",
    "regions-4.bitml",
    "timed-commitment.bitml",
];

pub const REVEAL_A: &str = r#"(strategy "A" (do-reveal a))"#;
pub const REVEAL_A_AFTER_B: &str = r#"(strategy "A" (do-reveal a) (if (revealed b)))"#;

pub fn bench_text(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/../../benchmarks/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

pub fn bench(name: &str) -> ContractSpec {
    parse_file_str(&bench_text(name)).unwrap().spec
}

pub fn strategies(forms: &[&str]) -> Strategies {
    Strategies::from_list(forms.iter().map(|s| parse_strategy(s).unwrap()))
}

/// Random two-party contracts with secrets `a` (of A) and `b` (of B) over a
/// balance of 20 satoshi, paired with one of a few strategy sets.
pub const PK_A: &str = "0279be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798";
pub const PK_B: &str = "02c6047f9441ed7d6d3045406e95c07cd85c778e4b8cef3ca7abac09b95c709ee5";

pub fn branch(depth: u32, balance: u64) -> BoxedStrategy<String> {
    let who = prop_oneof![Just("A"), Just("B")];
    let withdraw = who.clone().prop_map(|p| format!("(withdraw \"{p}\")"));
    if depth == 0 {
        return withdraw.boxed();
    }
    let guarded = move || branch(depth - 1, balance);
    let mut options = vec![
        (2, withdraw.boxed()),
        (
            1,
            (prop_oneof![Just(10u64), Just(20)], guarded())
                .prop_map(|(t, b)| format!("(after {t} {b})"))
                .boxed(),
        ),
        (
            1,
            (who, guarded())
                .prop_map(|(p, b)| format!("(auth \"{p}\" {b})"))
                .boxed(),
        ),
        (
            2,
            (
                prop_oneof![Just("a"), Just("b")],
                prop::option::of(0u64..3),
                contract(depth - 1, balance),
            )
                .prop_map(|(s, k, c)| {
                    let pred = k.map_or(String::new(), |k| format!(" (pred (< (len {s}) {k}))"));
                    format!("(reveal ({s}){pred} {c})")
                })
                .boxed(),
        ),
    ];
    if balance > 1 {
        let split = (1..balance)
            .prop_flat_map(move |x| {
                (
                    Just(x),
                    contract(depth - 1, x),
                    contract(depth - 1, balance - x),
                )
            })
            .prop_map(move |(x, l, r)| format!("(split ({x} -> {l}) ({} -> {r}))", balance - x));
        options.push((1, split.boxed()));
    }
    prop::strategy::Union::new_weighted(options).boxed()
}

pub fn contract(depth: u32, balance: u64) -> BoxedStrategy<String> {
    prop::collection::vec(branch(depth, balance), 1..3)
        .prop_map(|bs| {
            if bs.len() == 1 {
                bs[0].clone()
            } else {
                format!("(choice {})", bs.join(" "))
            }
        })
        .boxed()
}

pub fn small_contract() -> impl proptest::strategy::Strategy<Value = (String, Vec<&'static str>)> {
    let strat = prop_oneof![
        Just(vec![]),
        Just(vec![REVEAL_A]),
        Just(vec![r#"(strategy "B" (do-reveal b) (if (revealed a)))"#]),
        Just(vec![REVEAL_A, r#"(strategy "B" (do-reveal b))"#]),
    ];
    (contract(2, 20), strat).prop_map(|(c, s)| {
        let text = format!(
            "(participant \"A\" {PK_A})\n(participant \"B\" {PK_B})\n(contract (pre\n\
             (deposit \"A\" 10 (outpoint {} 0))\n(deposit \"B\" 10 (outpoint {} 0))\n\
             (secret \"A\" a {})\n(secret \"B\" b {}))\n{c})",
            "11".repeat(32),
            "22".repeat(32),
            "33".repeat(32),
            "44".repeat(32),
        );
        (text, s)
    })
}

/// Preimage of abstract length `n` for secret `name`.
pub fn preimage(name: &str, n: usize) -> Vec<u8> {
    name.as_bytes()
        .iter()
        .cycle()
        .take(ETA as usize + n)
        .copied()
        .collect()
}

/// Runs every input of every finalized transaction through the reference
/// VM and through the tree interpreter. Returns the failing inputs.
pub fn failing_inputs(dag: &TxDag, fin: &Finalized) -> Vec<(String, usize)> {
    let mut bad = Vec::new();
    for ft in &fin.txs {
        let t = dag.template(&ft.template).unwrap();
        for (k, input) in t.inputs.iter().enumerate() {
            let (spk, code) = match &input.source {
                Source::External { owner, .. } => {
                    let s = p2pkh_script(&hash160(&owner.pubkey.0));
                    (s.clone(), s)
                }
                Source::Internal { template, output } => {
                    let parent = fin.tx(template).unwrap();
                    let (_, redeem) = split_script_sig(&ft.tx.inputs[k].script_sig).unwrap();
                    (parent.outputs[*output].script_pubkey.clone(), redeem)
                }
            };
            let checker = TestChecker {
                digest: ft.tx.sighash_all(k, &code).unwrap(),
            };
            let vm_ok = vm::verify_input(&ft.tx.inputs[k].script_sig, &spk, &checker).is_ok();
            if let Some(redeem) = &input.redeem_script {
                let (items, _) = split_script_sig(&ft.tx.inputs[k].script_sig).unwrap();
                let w: Witness = input.slots.iter().cloned().zip(items).collect();
                let tree_ok = interpret(redeem, &w, &checker).unwrap();
                assert_eq!(
                    vm_ok, tree_ok,
                    "{} input {k}: VM and tree evaluation disagree",
                    t.name
                );
            }
            if !vm_ok {
                bad.push((t.name.clone(), k));
            }
        }
    }
    bad
}

/// Replaces witness item `index` of input 0 of `template` and re-checks it.
pub fn corrupt(dag: &TxDag, fin: &Finalized, template: &str, index: usize, value: Vec<u8>) -> bool {
    let mut fin = fin.clone();
    let ft = fin.txs.iter_mut().find(|t| t.template == template).unwrap();
    let (mut items, redeem) = split_script_sig(&ft.tx.inputs[0].script_sig).unwrap();
    items[index] = value;
    let mut s = Vec::new();
    for it in items.iter().chain([&redeem]) {
        bitml::txwire::push_data(&mut s, it).unwrap();
    }
    ft.tx.inputs[0].script_sig = s;
    failing_inputs(dag, &fin).iter().any(|(t, _)| t == template)
}

/// Sequences of executed branches, as template names, reachable in the LTS.
pub fn lts_fire_sequences(spec: &bitml::ast::ContractSpec) -> BTreeSet<Vec<String>> {
    fn go(
        lts: &Lts<'_>,
        cfg: &bitml::semantics::Configuration,
        seq: &mut Vec<String>,
        out: &mut BTreeSet<Vec<String>>,
    ) {
        out.insert(seq.clone());
        for m in lts.enumerate_moves(cfg) {
            let next = lts.apply_move(cfg, &m).unwrap();
            if let Move::Fire { path, .. } = &m {
                seq.push(template_name(path));
                go(lts, &next, seq, out);
                seq.pop();
            } else {
                go(lts, &next, seq, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    for lengths in sample_secret_regions(spec) {
        let lts = Lts::new(spec, lengths);
        go(&lts, &lts.initial(), &mut Vec::new(), &mut out);
    }
    out
}

/// Sequences of contract templates that can be published in order, each
/// spending a distinct output of an already published transaction.
pub fn dag_spending_sequences(dag: &TxDag) -> BTreeSet<Vec<String>> {
    fn go(
        dag: &TxDag,
        published: &mut Vec<String>,
        spent: &mut BTreeSet<(String, usize)>,
        out: &mut BTreeSet<Vec<String>>,
    ) {
        out.insert(published[1..].to_vec());
        for e in &dag.edges {
            let key = (e.from.clone(), e.output);
            if published.contains(&e.from) && !spent.contains(&key) {
                spent.insert(key.clone());
                published.push(e.to.clone());
                go(dag, published, spent, out);
                published.pop();
                spent.remove(&key);
            }
        }
    }
    let mut out = BTreeSet::new();
    go(
        dag,
        &mut vec!["T_init".to_string()],
        &mut BTreeSet::new(),
        &mut out,
    );
    out
}

/// Double SHA-256 computed directly, independent of the crate's helpers.
pub fn oracle_sha256d(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(Sha256::digest(bytes)).into()
}

/// Preimages used by the benchmark commitments: the secret name repeated
/// to `16 + n` bytes, for the smallest `n` whose hash matches.
pub fn bench_preimages(spec: &bitml::ast::ContractSpec) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for s in &spec.precondition.secrets {
        for n in 0..64 {
            let p: Vec<u8> = s
                .name
                .as_bytes()
                .iter()
                .cycle()
                .take(16 + n)
                .copied()
                .collect();
            if Sha256::digest(&p)[..] == s.hash.0 {
                out.insert(s.name.clone(), p);
                break;
            }
        }
    }
    out
}

pub fn arb_tx() -> impl Strategy<Value = RawTx> {
    let input = (
        any::<[u8; 32]>(),
        any::<u32>(),
        prop::collection::vec(any::<u8>(), 0..300),
        any::<u32>(),
    )
        .prop_map(|(prev_txid, prev_vout, script_sig, sequence)| TxIn {
            prev_txid,
            prev_vout,
            script_sig,
            sequence,
        });
    let output = (any::<u64>(), prop::collection::vec(any::<u8>(), 0..80)).prop_map(
        |(value, script_pubkey)| TxOut {
            value,
            script_pubkey,
        },
    );
    (
        any::<u32>(),
        prop::collection::vec(input, 0..5),
        prop::collection::vec(output, 0..5),
        any::<u32>(),
    )
        .prop_map(|(version, inputs, outputs, locktime)| RawTx {
            version,
            inputs,
            outputs,
            locktime,
        })
}

/// Plain forward exploration, independent of the verifier's graph builder.
pub struct Explicit {
    pub states: Vec<Configuration>,
    pub guaranteed: Vec<Vec<usize>>,
}

pub fn explore(lts: &Lts<'_>, s: &Strategies) -> Explicit {
    let mut index = HashMap::new();
    let mut states = vec![lts.initial()];
    let mut guaranteed = Vec::new();
    index.insert(states[0].clone(), 0usize);
    let mut i = 0;
    while i < states.len() {
        let cfg = states[i].clone();
        let mut g = Vec::new();
        for m in lts.enumerate_moves(&cfg) {
            let class = classify_move(&m, s, &cfg, lts.partition());
            if class == MoveClass::Prohibited {
                continue;
            }
            let next = lts.apply_move(&cfg, &m).unwrap();
            let t = *index.entry(next.clone()).or_insert_with(|| {
                states.push(next);
                states.len() - 1
            });
            if class == MoveClass::Guaranteed {
                g.push(t);
            }
        }
        guaranteed.push(g);
        i += 1;
    }
    Explicit { states, guaranteed }
}

pub fn oracle_liquid(e: &Explicit) -> bool {
    (0..e.states.len()).all(|start| {
        let mut seen = vec![false; e.states.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(s) = queue.pop_front() {
            if e.states[s].active_balance() == 0 {
                return true;
            }
            for &t in &e.guaranteed[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        false
    })
}

pub fn state_atoms() -> Vec<Atom> {
    let mut atoms = vec![
        Atom::Revealed("a".into()),
        Atom::Revealed("b".into()),
        Atom::Terminated,
    ];
    for p in ["A", "B"] {
        for amount in [1, 10, 20] {
            atoms.push(Atom::HasDeposit {
                participant: p.into(),
                amount,
            });
        }
    }
    atoms
}
