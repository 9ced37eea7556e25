use std::collections::BTreeMap;

use bitml::ast::{Branch, ContractSpec, Hash256, PubKey};
use bitml::compiler::{compile, KeyRef, ScriptExpr, SizePred, SizeTerm, Slot, Source, TxDag};
use bitml::parser::parse_file_str;
use bitml::txwire::{
    assemble_redeem_script, assemble_script, encode_num, finalize, interpret, split_script_sig, vm,
    RawTx, SigChecker, TestChecker, TestSigner, TxError, TxIn, TxOut, Witness,
};
use proptest::prelude::*;

mod common;
use common::{arb_tx, bench_preimages, oracle_sha256d};
use sha2::{Digest, Sha256};

fn manifest(path: &str) -> String {
    format!("{}/{path}", env!("CARGO_MANIFEST_DIR"))
}

fn bench(name: &str) -> String {
    std::fs::read_to_string(manifest(&format!("../../benchmarks/{name}"))).unwrap()
}

fn benchmarks() -> Vec<(String, String)> {
    let mut out: Vec<_> = std::fs::read_dir(manifest("../../benchmarks"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".bitml"))
        .map(|n| (n.clone(), bench(&n)))
        .collect();
    out.sort();
    out
}

fn standard_benchmarks() -> Vec<(String, ContractSpec, TxDag, bitml::txwire::Finalized)> {
    benchmarks()
        .into_iter()
        .filter_map(|(name, text)| {
            let spec = parse_file_str(&text).unwrap().spec;
            let dag = compile(&spec, 1000).unwrap();
            let fin = finalize(&dag, &TestSigner, &bench_preimages(&spec)).ok()?;
            assert!(fin.missing_preimages.is_empty(), "{name}");
            Some((name, spec, dag, fin))
        })
        .collect()
}

#[test]
fn every_benchmark_but_the_oversized_one_finalizes() {
    let names: Vec<String> = standard_benchmarks().into_iter().map(|(n, ..)| n).collect();
    assert_eq!(names.len() + 1, benchmarks().len());
    assert!(!names.contains(&"lottery-4-nonstandard.bitml".to_string()));
}

#[test]
fn generated_transactions_round_trip() {
    let mut n = 0;
    for (.., fin) in standard_benchmarks() {
        for ft in &fin.txs {
            let bytes = ft.tx.serialize();
            assert_eq!(RawTx::deserialize(&bytes).unwrap(), ft.tx);
            let mut want = oracle_sha256d(&bytes);
            want.reverse();
            assert_eq!(ft.tx.txid().0, want);
            n += 1;
        }
    }
    assert!(n > 50);
}

#[test]
fn txids_chain_in_topological_order() {
    for (name, _, dag, fin) in standard_benchmarks() {
        let external: Vec<[u8; 32]> = dag
            .root()
            .inputs
            .iter()
            .map(|i| match &i.source {
                Source::External { outpoint, .. } => {
                    let mut id = outpoint.txid.0;
                    id.reverse();
                    id
                }
                Source::Internal { .. } => panic!("T_init spends only deposits"),
            })
            .collect();
        let mut earlier: Vec<[u8; 32]> = Vec::new();
        for ft in &fin.txs {
            for i in &ft.tx.inputs {
                assert!(
                    external.contains(&i.prev_txid) || earlier.contains(&i.prev_txid),
                    "{name}: {} spends an unknown transaction",
                    ft.template
                );
            }
            earlier.push(oracle_sha256d(&ft.tx.serialize()));
        }
    }
}

/// Spends fail exactly where the branch predicate is false for the lengths
/// of the benchmark preimages.
#[test]
fn every_benchmark_spend_verifies() {
    for (name, spec, dag, fin) in standard_benchmarks() {
        let lengths: BTreeMap<String, u64> = bench_preimages(&spec)
            .into_iter()
            .map(|(s, p)| (s, p.len() as u64 - 16))
            .collect();
        for ft in &fin.txs {
            let t = dag.template(&ft.template).unwrap();
            for (k, input) in t.inputs.iter().enumerate() {
                let Source::Internal { template, output } = &input.source else {
                    continue;
                };
                let spk = &fin.tx(template).unwrap().outputs[*output].script_pubkey;
                let (_, redeem) = split_script_sig(&ft.tx.inputs[k].script_sig).unwrap();
                let checker = TestChecker {
                    digest: ft.tx.sighash_all(k, &redeem).unwrap(),
                };
                let r = vm::verify_input(&ft.tx.inputs[k].script_sig, spk, &checker);
                let expect = match spec
                    .contract
                    .branch_at(t.branch.as_ref().unwrap())
                    .unwrap()
                    .core()
                {
                    Branch::Reveal { predicate, .. } => {
                        predicate.eval(&|s: &str| lengths.get(s).copied()).unwrap()
                    }
                    _ => true,
                };
                assert_eq!(r.is_ok(), expect, "{name} {}: {r:?}", t.name);
            }
        }
    }
}

/// Tree-level interpretation and opcode-level execution of the assembled
/// script agree on the finalized witness and on mutations of it.
#[test]
fn interpreter_agrees_with_assembled_bytes() {
    let mut accepted = 0;
    let mut rejected = 0;
    for (name, _, dag, fin) in standard_benchmarks() {
        for ft in &fin.txs {
            let t = dag.template(&ft.template).unwrap();
            let Some(redeem) = &t.inputs[0].redeem_script else {
                continue;
            };
            let code = assemble_redeem_script(redeem).unwrap();
            let checker = TestChecker {
                digest: ft.tx.sighash_all(0, &code).unwrap(),
            };
            let (items, _) = split_script_sig(&ft.tx.inputs[0].script_sig).unwrap();
            let mut variants = vec![items.clone()];
            for j in 0..items.len() {
                let mut v = items.clone();
                v[j].push(0x01);
                variants.push(v);
                let mut v = items.clone();
                v[j] = Vec::new();
                variants.push(v);
                let mut v = items.clone();
                if let Some(b) = v[j].first_mut() {
                    *b ^= 0x80;
                    variants.push(v);
                }
                let mut v = items.clone();
                v[j] = encode_num(j as i64 + 1);
                variants.push(v);
            }
            for v in variants {
                let w: Witness = t.inputs[0].slots.iter().cloned().zip(v.clone()).collect();
                let tree = interpret(redeem, &w, &checker).unwrap();
                let bytes = vm::run_redeem(&code, &v, &checker).is_ok();
                assert_eq!(tree, bytes, "{name} {}: witness {v:?}", t.name);
                if tree {
                    accepted += 1;
                } else {
                    rejected += 1;
                }
            }
        }
    }
    assert!(
        accepted > 20 && rejected > 100,
        "{accepted} accepted, {rejected} rejected"
    );
}

#[test]
fn sighash_blanks_other_inputs() {
    for (.., fin) in standard_benchmarks() {
        for ft in &fin.txs {
            let tx = &ft.tx;
            for k in 0..tx.inputs.len() {
                let code = [0x51u8];
                let d = tx.sighash_all(k, &code).unwrap();
                // Oracle: blank, substitute, append the hashtype, hash twice.
                let mut copy = tx.clone();
                for (i, input) in copy.inputs.iter_mut().enumerate() {
                    input.script_sig = if i == k { code.to_vec() } else { Vec::new() };
                }
                let mut bytes = copy.serialize();
                bytes.extend_from_slice(&1u32.to_le_bytes());
                assert_eq!(d, oracle_sha256d(&bytes));
                for other in (0..tx.inputs.len()).filter(|&o| o != k) {
                    let mut m = tx.clone();
                    m.inputs[other].script_sig = vec![0xde, 0xad];
                    assert_eq!(m.sighash_all(k, &code).unwrap(), d);
                }
            }
        }
    }
}

fn sample_tx() -> RawTx {
    RawTx {
        version: 2,
        inputs: vec![
            TxIn {
                prev_txid: [7; 32],
                prev_vout: 1,
                script_sig: vec![1, 2, 3],
                sequence: 0xFFFF_FFFE,
            },
            TxIn {
                prev_txid: [9; 32],
                prev_vout: 0,
                script_sig: vec![],
                sequence: 0xFFFF_FFFE,
            },
        ],
        outputs: vec![TxOut {
            value: 5000,
            script_pubkey: vec![0x51],
        }],
        locktime: 100_000,
    }
}

#[test]
fn sighash_covers_outputs_and_index() {
    let tx = sample_tx();
    let d0 = tx.sighash_all(0, &[0x51]).unwrap();
    let d1 = tx.sighash_all(1, &[0x51]).unwrap();
    assert_ne!(d0, d1);
    let mut m = tx.clone();
    m.outputs[0].value += 1;
    assert_ne!(m.sighash_all(0, &[0x51]).unwrap(), d0);
    assert_eq!(
        tx.sighash_all(2, &[]),
        Err(TxError::IndexOutOfRange {
            index: 2,
            inputs: 2
        })
    );
    assert_ne!(m.txid(), tx.txid());
}

#[test]
fn golden_transaction_bytes() {
    let tx = sample_tx();
    let want = concat!(
        "02000000",
        "02",
        "0707070707070707070707070707070707070707070707070707070707070707",
        "01000000",
        "03010203",
        "feffffff",
        "0909090909090909090909090909090909090909090909090909090909090909",
        "00000000",
        "00",
        "feffffff",
        "01",
        "8813000000000000",
        "0151",
        "a0860100"
    );
    assert_eq!(tx.to_hex(), want);
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(manifest(&format!("tests/fixtures/{name}")))
        .unwrap()
        .trim()
        .to_string()
}

fn fixture_key(i: u8) -> KeyRef {
    let mut pk = [0u8; 33];
    pk[0] = 2;
    pk[32] = i;
    KeyRef::declared(&format!("P{i}"), PubKey(pk))
}

fn fixture_scripts() -> Vec<(&'static str, ScriptExpr)> {
    let a = Slot::Preimage { secret: "a".into() };
    let b = Slot::Preimage { secret: "b".into() };
    let h = Hash256(Sha256::digest(b"aaaaaaaaaaaaaaaa").into());
    let len = |s: &Slot| SizeTerm::Sub {
        left: Box::new(SizeTerm::Size { slot: s.clone() }),
        right: Box::new(SizeTerm::Const { value: 16 }),
    };
    vec![
        ("true", ScriptExpr::True),
        (
            "checksig",
            ScriptExpr::CheckSig {
                key: fixture_key(1),
            },
        ),
        (
            "multisig",
            ScriptExpr::CheckMultiAll {
                keys: vec![fixture_key(1), fixture_key(2)],
            },
        ),
        (
            "preimage",
            ScriptExpr::PreimageHashEq {
                slot: a.clone(),
                hash: h,
            },
        ),
        (
            "size_eq",
            ScriptExpr::SizeEq {
                slot: a.clone(),
                size: 17,
            },
        ),
        (
            "reveal",
            ScriptExpr::And {
                args: vec![
                    ScriptExpr::CheckMultiAll {
                        keys: vec![fixture_key(1), fixture_key(2)],
                    },
                    ScriptExpr::PreimageHashEq {
                        slot: a.clone(),
                        hash: h,
                    },
                    ScriptExpr::SizeAtLeast {
                        slot: a.clone(),
                        size: 16,
                    },
                    ScriptExpr::SizeCmp {
                        pred: SizePred::Or {
                            left: Box::new(SizePred::Eq {
                                left: len(&a),
                                right: SizeTerm::Const { value: 1 },
                            }),
                            right: Box::new(SizePred::Not {
                                arg: Box::new(SizePred::Lt {
                                    left: SizeTerm::Add {
                                        left: Box::new(len(&a)),
                                        right: Box::new(len(&b)),
                                    },
                                    right: SizeTerm::Const { value: 300 },
                                }),
                            }),
                        },
                    },
                ],
            },
        ),
        (
            "choice",
            ScriptExpr::Or {
                args: vec![
                    ScriptExpr::CheckSig {
                        key: fixture_key(1),
                    },
                    ScriptExpr::CheckSig {
                        key: fixture_key(2),
                    },
                    ScriptExpr::PreimageHashEq { slot: a, hash: h },
                ],
            },
        ),
    ]
}

#[test]
fn golden_script_bytes() {
    let want = golden("scripts.txt");
    let got: String = fixture_scripts()
        .into_iter()
        .map(|(n, e)| format!("{n} {}\n", hex::encode(assemble_script(&e).unwrap())))
        .collect();
    assert_eq!(got.trim(), want);
}

#[test]
fn golden_mutual_tc_transactions() {
    let spec = parse_file_str(&bench("mutual-tc-2.bitml")).unwrap().spec;
    let dag = compile(&spec, 1000).unwrap();
    let fin = finalize(&dag, &TestSigner, &bench_preimages(&spec)).unwrap();
    assert_eq!(fin.to_hex_lines().trim(), golden("mutual-tc-2.txs.hex"));
}

struct AnySig;

impl SigChecker for AnySig {
    fn check_sig(&self, sig: &[u8], _: &PubKey) -> bool {
        !sig.is_empty()
    }
}

fn arb_term(depth: u32) -> BoxedStrategy<SizeTerm> {
    let leaf = prop_oneof![
        (-40i64..40).prop_map(|value| SizeTerm::Const { value }),
        prop_oneof![Just("a"), Just("b")].prop_map(|s| SizeTerm::Size {
            slot: Slot::Preimage { secret: s.into() }
        }),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    prop_oneof![
        leaf,
        (arb_term(depth - 1), arb_term(depth - 1), any::<bool>()).prop_map(|(l, r, add)| {
            let (left, right) = (Box::new(l), Box::new(r));
            if add {
                SizeTerm::Add { left, right }
            } else {
                SizeTerm::Sub { left, right }
            }
        }),
    ]
    .boxed()
}

fn arb_pred(depth: u32) -> BoxedStrategy<SizePred> {
    let cmp = (arb_term(2), arb_term(2), any::<bool>()).prop_map(|(left, right, eq)| {
        if eq {
            SizePred::Eq { left, right }
        } else {
            SizePred::Lt { left, right }
        }
    });
    if depth == 0 {
        return prop_oneof![Just(SizePred::True), cmp].boxed();
    }
    prop_oneof![
        cmp,
        arb_pred(depth - 1).prop_map(|p| SizePred::Not { arg: Box::new(p) }),
        (arb_pred(depth - 1), arb_pred(depth - 1), any::<bool>()).prop_map(|(l, r, and)| {
            let (left, right) = (Box::new(l), Box::new(r));
            if and {
                SizePred::And { left, right }
            } else {
                SizePred::Or { left, right }
            }
        }),
    ]
    .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_transactions_round_trip(tx in arb_tx()) {
        let bytes = tx.serialize();
        prop_assert_eq!(RawTx::deserialize(&bytes).unwrap(), tx.clone());
        let mut want = oracle_sha256d(&bytes);
        want.reverse();
        prop_assert_eq!(tx.txid().0, want);
    }

    #[test]
    fn deserialize_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        if let Ok(tx) = RawTx::deserialize(&bytes) {
            prop_assert_eq!(tx.serialize(), bytes);
        }
    }

    #[test]
    fn sighash_ignores_other_scripts(tx in arb_tx(), junk in prop::collection::vec(any::<u8>(), 0..40)) {
        prop_assume!(tx.inputs.len() >= 2);
        let d = tx.sighash_all(0, &[0x51]).unwrap();
        let mut m = tx.clone();
        m.inputs[1].script_sig = junk;
        prop_assert_eq!(m.sighash_all(0, &[0x51]).unwrap(), d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn size_predicates_agree_with_bytes(pred in arb_pred(2), la in 0usize..40, lb in 0usize..40, sel in 0i64..3) {
        let e = ScriptExpr::Or {
            args: vec![
                ScriptExpr::SizeCmp { pred: pred.clone() },
                ScriptExpr::And {
                    args: vec![
                        ScriptExpr::SizeAtLeast { slot: Slot::Preimage { secret: "a".into() }, size: 16 },
                        ScriptExpr::SizeCmp { pred },
                    ],
                },
            ],
        };
        let slots = e.slots();
        let mut w = Witness::new();
        for s in &slots {
            let v = match s {
                Slot::Selector => encode_num(sel),
                Slot::Preimage { secret } if secret == "a" => vec![0xaa; la],
                _ => vec![0xbb; lb],
            };
            w.insert(s.clone(), v);
        }
        let items: Vec<Vec<u8>> = slots.iter().map(|s| w[s].clone()).collect();
        let code = assemble_script(&e).unwrap();
        let tree = interpret(&e, &w, &AnySig).unwrap();
        prop_assert_eq!(tree, vm::run_redeem(&code, &items, &AnySig).is_ok());
    }
}
