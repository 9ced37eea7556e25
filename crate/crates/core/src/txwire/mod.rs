//! Bitcoin script and transaction encoding for compiled contracts.
//!
//! Legacy (pre-SegWit) transactions only: version 2, `SIGHASH_ALL`, P2PKH
//! and P2SH outputs.

mod script;
mod signer;
mod tx;
#[doc(hidden)]
pub mod vm;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::ast::Txid;
use crate::compiler::{
    check_standardness, Payout, Slot, Source, StandardnessViolation, TxDag, TxTemplate, ETA,
};

pub use script::{
    assemble_redeem_script, assemble_script, decode_num, encode_num, interpret, op, p2pkh_script,
    p2sh_script, push_data, push_num, InterpretError, ScriptError, SigChecker, Witness,
    MAX_MULTISIG_KEYS, MAX_PUSH,
};
pub use signer::{test_signature, SignError, Signer, TestChecker, TestSigner};
pub use tx::{
    write_compact_size, RawTx, TxError, TxIn, TxOut, SEQUENCE_FINAL, SEQUENCE_LOCKTIME,
    SIGHASH_ALL, TX_VERSION,
};

/// Locktimes at or above this value are timestamps rather than heights.
pub const LOCKTIME_THRESHOLD: u64 = 500_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FinalizeError {
    #[error("{} standardness violation(s), first: {}", .0.len(), .0[0])]
    Standardness(Vec<StandardnessViolation>),
    #[error("{template}: locktime {locktime} is not a block height")]
    Locktime { template: String, locktime: u64 },
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Sign(#[from] SignError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalTx {
    pub template: String,
    pub tx: RawTx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finalized {
    /// Parents before children.
    pub txs: Vec<FinalTx>,
    /// Secrets whose preimages were not supplied; their slots hold a
    /// placeholder of the minimum length and those spends are invalid.
    pub missing_preimages: BTreeSet<String>,
}

impl Finalized {
    pub fn tx(&self, template: &str) -> Option<&RawTx> {
        self.txs
            .iter()
            .find(|t| t.template == template)
            .map(|t| &t.tx)
    }

    /// One lowercase hex transaction per line.
    pub fn to_hex_lines(&self) -> String {
        self.txs.iter().map(|t| t.tx.to_hex() + "\n").collect()
    }
}

fn output_script(p: &Payout) -> Result<Vec<u8>, ScriptError> {
    Ok(match p {
        Payout::P2pkh { pubkey_hash, .. } => p2pkh_script(pubkey_hash),
        Payout::P2sh { script, .. } => p2sh_script(&assemble_redeem_script(script)?),
    })
}

/// Parents before children, keeping the DAG's order among independent
/// templates.
pub fn topological_order(dag: &TxDag) -> Vec<&TxTemplate> {
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < dag.templates.len() {
        let before = out.len();
        for t in &dag.templates {
            if done.contains(t.name.as_str()) {
                continue;
            }
            let ready = t.inputs.iter().all(|i| match &i.source {
                Source::External { .. } => true,
                Source::Internal { template, .. } => done.contains(template.as_str()),
            });
            if ready {
                done.insert(&t.name);
                out.push(t);
            }
        }
        assert!(
            out.len() > before,
            "template DAG has a cycle or a dangling reference"
        );
    }
    out
}

/// Instantiates every template as a signed transaction.
///
/// Each contract input is spent through the disjunct of the branch its
/// template executes: the selector and that disjunct's signatures and
/// preimages are filled in, the remaining slots are empty pushes. `preimages`
/// maps secret names to the committed preimages (`ETA + length` bytes).
pub fn finalize(
    dag: &TxDag,
    signer: &dyn Signer,
    preimages: &BTreeMap<String, Vec<u8>>,
) -> Result<Finalized, FinalizeError> {
    let violations = check_standardness(dag);
    if !violations.is_empty() {
        return Err(FinalizeError::Standardness(violations));
    }
    let mut txids: HashMap<&str, Txid> = HashMap::new();
    let mut out = Vec::new();
    let mut missing = BTreeSet::new();
    for t in topological_order(dag) {
        if t.locktime >= LOCKTIME_THRESHOLD {
            return Err(FinalizeError::Locktime {
                template: t.name.clone(),
                locktime: t.locktime,
            });
        }
        let sequence = if t.locktime > 0 {
            SEQUENCE_LOCKTIME
        } else {
            SEQUENCE_FINAL
        };
        let inputs = t
            .inputs
            .iter()
            .map(|i| {
                let (txid, vout) = match &i.source {
                    Source::External { outpoint, .. } => (outpoint.txid, outpoint.vout),
                    Source::Internal { template, output } => {
                        (txids[template.as_str()], *output as u32)
                    }
                };
                let mut prev_txid = txid.0;
                prev_txid.reverse();
                TxIn {
                    prev_txid,
                    prev_vout: vout,
                    script_sig: Vec::new(),
                    sequence,
                }
            })
            .collect();
        let outputs = t
            .outputs
            .iter()
            .map(|o| {
                Ok(TxOut {
                    value: o.value,
                    script_pubkey: output_script(&o.payout)?,
                })
            })
            .collect::<Result<_, ScriptError>>()?;
        let mut tx = RawTx {
            version: TX_VERSION,
            inputs,
            outputs,
            locktime: t.locktime as u32,
        };
        let mut script_sigs = Vec::new();
        for (k, input) in t.inputs.iter().enumerate() {
            script_sigs.push(match (&input.source, &input.redeem_script) {
                (Source::External { owner, .. }, _) => {
                    let pk = signer.pubkey(owner);
                    let code = p2pkh_script(&crate::hash::hash160(&pk.0));
                    let digest = tx.sighash_all(k, &code).expect("input index in range");
                    let mut s = Vec::new();
                    push_data(&mut s, &signer.sign(owner, &digest)?)?;
                    push_data(&mut s, &pk.0)?;
                    s
                }
                (Source::Internal { .. }, Some(redeem)) => {
                    let code = assemble_redeem_script(redeem)?;
                    let digest = tx.sighash_all(k, &code).expect("input index in range");
                    let chosen = input.disjunct.map_or(redeem, |d| &redeem.disjuncts()[d]);
                    let used: BTreeSet<Slot> = chosen.slots().into_iter().collect();
                    let mut s = Vec::new();
                    for slot in &input.slots {
                        let item = match slot {
                            Slot::Selector => encode_num(input.disjunct.unwrap_or(0) as i64),
                            _ if !used.contains(slot) => Vec::new(),
                            Slot::Sig { key } => signer.sign(key, &digest)?,
                            Slot::Preimage { secret } => {
                                preimages.get(secret).cloned().unwrap_or_else(|| {
                                    missing.insert(secret.clone());
                                    vec![0; ETA as usize]
                                })
                            }
                        };
                        push_data(&mut s, &item)?;
                    }
                    push_data(&mut s, &code)?;
                    s
                }
                (Source::Internal { .. }, None) => {
                    unreachable!("contract inputs carry their redeem script")
                }
            });
        }
        for (input, s) in tx.inputs.iter_mut().zip(script_sigs) {
            input.script_sig = s;
        }
        txids.insert(&t.name, tx.txid());
        out.push(FinalTx {
            template: t.name.clone(),
            tx,
        });
    }
    Ok(Finalized {
        txs: out,
        missing_preimages: missing,
    })
}

/// The witness items of a finalized P2SH script signature: every push
/// except the trailing redeem script.
pub fn split_script_sig(script_sig: &[u8]) -> Result<(Vec<Vec<u8>>, Vec<u8>), vm::VmError> {
    let mut stack = vm::Stack::new();
    vm::execute(script_sig, &mut stack, &NoSigs)?;
    let redeem = stack.pop().ok_or(vm::VmError::Underflow(0))?;
    Ok((stack, redeem))
}

struct NoSigs;

impl SigChecker for NoSigs {
    fn check_sig(&self, _: &[u8], _: &crate::ast::PubKey) -> bool {
        false
    }
}
