//! Lowering of script expressions to Bitcoin script, and their tree-level
//! evaluation.
//!
//! The witness slots of an expression (see [`ScriptExpr::slots`]) are pushed
//! by the spender in order, so slot `j` of `n` starts at depth `n - 1 - j`
//! and is read with `<depth> OP_PICK`. Every check leaves the stack as it
//! found it, and the script ends by dropping the slots and pushing true.
//!
//! | expression | opcodes |
//! |---|---|
//! | `TrueE` (whole script) | `OP_1` |
//! | `CheckSig(k)` | `<d> PICK <pk> CHECKSIGVERIFY` |
//! | `CheckMultiAll(k1..kn)` | `0 <d1> PICK .. <dn> PICK <n> <pk1> .. <pkn> <n> CHECKMULTISIGVERIFY` |
//! | `PreimageHashEq(s, h)` | `<d> PICK SHA256 <h> EQUALVERIFY` |
//! | `SizeEq(s, n)` | `<d> PICK SIZE NIP <n> NUMEQUALVERIFY` |
//! | `SizeAtLeast(s, n)` | `<d> PICK SIZE NIP <n> GREATERTHANOREQUAL VERIFY` |
//! | `SizeCmp(p)` | `<p> VERIFY` |
//! | `AndE(e1..en)` | `<e1> .. <en>` |
//! | `OrE(e0..en)` | `<d> PICK 0 NUMEQUAL IF <e0> ELSE .. <d> PICK <n> NUMEQUALVERIFY <en> ENDIF ..` |
//! | end of script | `2DROP` per pair of slots, `DROP` for an odd one, `OP_1` |
//!
//! Size terms: a constant is a number push, `Size(s)` is `<d> PICK SIZE NIP`,
//! `+`/`-` are `ADD`/`SUB`. Predicates: `true` is `OP_1`, `not`/`and`/`or`
//! are `NOT`/`BOOLAND`/`BOOLOR`, `=`/`<` are `NUMEQUAL`/`LESSTHAN`.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ast::PubKey;
use crate::compiler::{KeyRef, ScriptExpr, SizePred, SizeTerm, Slot};
use crate::hash::sha256;

/// Largest standard push, and hence largest redeem script.
pub const MAX_PUSH: usize = 520;

/// Largest number of keys in one multisig check.
pub const MAX_MULTISIG_KEYS: usize = 15;

pub mod op {
    pub const OP_0: u8 = 0x00;
    pub const OP_PUSHDATA1: u8 = 0x4c;
    pub const OP_PUSHDATA2: u8 = 0x4d;
    pub const OP_PUSHDATA4: u8 = 0x4e;
    pub const OP_1NEGATE: u8 = 0x4f;
    pub const OP_1: u8 = 0x51;
    pub const OP_16: u8 = 0x60;
    pub const OP_IF: u8 = 0x63;
    pub const OP_NOTIF: u8 = 0x64;
    pub const OP_ELSE: u8 = 0x67;
    pub const OP_ENDIF: u8 = 0x68;
    pub const OP_VERIFY: u8 = 0x69;
    pub const OP_2DROP: u8 = 0x6d;
    pub const OP_DROP: u8 = 0x75;
    pub const OP_DUP: u8 = 0x76;
    pub const OP_NIP: u8 = 0x77;
    pub const OP_PICK: u8 = 0x79;
    pub const OP_SIZE: u8 = 0x82;
    pub const OP_EQUAL: u8 = 0x87;
    pub const OP_EQUALVERIFY: u8 = 0x88;
    pub const OP_NOT: u8 = 0x91;
    pub const OP_ADD: u8 = 0x93;
    pub const OP_SUB: u8 = 0x94;
    pub const OP_BOOLAND: u8 = 0x9a;
    pub const OP_BOOLOR: u8 = 0x9b;
    pub const OP_NUMEQUAL: u8 = 0x9c;
    pub const OP_NUMEQUALVERIFY: u8 = 0x9d;
    pub const OP_LESSTHAN: u8 = 0x9f;
    pub const OP_GREATERTHANOREQUAL: u8 = 0xa2;
    pub const OP_SHA256: u8 = 0xa8;
    pub const OP_HASH160: u8 = 0xa9;
    pub const OP_CHECKSIG: u8 = 0xac;
    pub const OP_CHECKSIGVERIFY: u8 = 0xad;
    pub const OP_CHECKMULTISIG: u8 = 0xae;
    pub const OP_CHECKMULTISIGVERIFY: u8 = 0xaf;
}

use op::*;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ScriptError {
    #[error("push of {size} bytes exceeds the {MAX_PUSH}-byte limit")]
    PushTooLarge { size: usize },
    #[error("redeem script of {size} bytes exceeds the {MAX_PUSH}-byte push limit")]
    ScriptTooLarge { size: usize },
    #[error("multisig over {count} keys exceeds the limit of {MAX_MULTISIG_KEYS}")]
    TooManyKeys { count: usize },
    #[error("constant {value} does not fit a 4-byte script number")]
    NumberOutOfRange { value: i64 },
    #[error("disjunction below the root of a script")]
    NestedOr,
    #[error("disjunction with fewer than two branches")]
    DegenerateOr,
}

/// Minimal little-endian sign-magnitude encoding of a script number.
pub fn encode_num(n: i64) -> Vec<u8> {
    if n == 0 {
        return Vec::new();
    }
    let neg = n < 0;
    let mut abs = n.unsigned_abs();
    let mut out = Vec::new();
    while abs > 0 {
        out.push((abs & 0xff) as u8);
        abs >>= 8;
    }
    if out.last().is_some_and(|b| b & 0x80 != 0) {
        out.push(if neg { 0x80 } else { 0 });
    } else if neg {
        *out.last_mut().expect("nonempty") |= 0x80;
    }
    out
}

/// Decodes a script number of at most `max_len` bytes.
pub fn decode_num(bytes: &[u8], max_len: usize) -> Option<i64> {
    if bytes.len() > max_len || bytes.len() > 8 {
        return None;
    }
    let Some((&last, _)) = bytes.split_last() else {
        return Some(0);
    };
    let mut n: i64 = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let b = if i + 1 == bytes.len() { b & 0x7f } else { b };
        n |= (b as i64) << (8 * i);
    }
    Some(if last & 0x80 != 0 { -n } else { n })
}

/// Appends the minimal push of `data`.
pub fn push_data(out: &mut Vec<u8>, data: &[u8]) -> Result<(), ScriptError> {
    let n = data.len();
    if n > MAX_PUSH {
        return Err(ScriptError::PushTooLarge { size: n });
    }
    match n {
        0 => out.push(OP_0),
        1 if (1..=16).contains(&data[0]) => out.push(OP_1 + data[0] - 1),
        1 if data[0] == 0x81 => out.push(OP_1NEGATE),
        1..=75 => {
            out.push(n as u8);
            out.extend_from_slice(data);
        }
        76..=255 => {
            out.push(OP_PUSHDATA1);
            out.push(n as u8);
            out.extend_from_slice(data);
        }
        _ => {
            out.push(OP_PUSHDATA2);
            out.extend_from_slice(&(n as u16).to_le_bytes());
            out.extend_from_slice(data);
        }
    }
    Ok(())
}

/// Appends a number push, rejecting values outside the 4-byte range.
pub fn push_num(out: &mut Vec<u8>, n: i64) -> Result<(), ScriptError> {
    if n.unsigned_abs() > i32::MAX as u64 {
        return Err(ScriptError::NumberOutOfRange { value: n });
    }
    push_data(out, &encode_num(n))
}

struct Asm<'a> {
    out: Vec<u8>,
    slots: &'a [Slot],
    /// Items pushed above the slots.
    extra: usize,
}

impl Asm<'_> {
    fn pick(&mut self, slot: &Slot) -> Result<(), ScriptError> {
        let j = self
            .slots
            .iter()
            .position(|s| s == slot)
            .expect("slot declared");
        let depth = self.slots.len() - 1 - j + self.extra;
        push_num(&mut self.out, depth as i64)?;
        self.out.push(OP_PICK);
        self.extra += 1;
        Ok(())
    }

    fn size_of(&mut self, slot: &Slot) -> Result<(), ScriptError> {
        self.pick(slot)?;
        self.out.extend([OP_SIZE, OP_NIP]);
        Ok(())
    }

    fn num(&mut self, n: i64) -> Result<(), ScriptError> {
        push_num(&mut self.out, n)?;
        self.extra += 1;
        Ok(())
    }

    fn data(&mut self, d: &[u8]) -> Result<(), ScriptError> {
        push_data(&mut self.out, d)?;
        self.extra += 1;
        Ok(())
    }

    /// Binary operator consuming two items and producing one.
    fn binop(&mut self, opcode: u8) {
        self.out.push(opcode);
        self.extra -= 1;
    }

    /// Verify-style operator consuming `n` items.
    fn consume(&mut self, opcode: u8, n: usize) {
        self.out.push(opcode);
        self.extra -= n;
    }

    fn term(&mut self, t: &SizeTerm) -> Result<(), ScriptError> {
        match t {
            SizeTerm::Const { value } => self.num(*value),
            SizeTerm::Size { slot } => self.size_of(slot),
            SizeTerm::Add { left, right } => {
                self.term(left)?;
                self.term(right)?;
                self.binop(OP_ADD);
                Ok(())
            }
            SizeTerm::Sub { left, right } => {
                self.term(left)?;
                self.term(right)?;
                self.binop(OP_SUB);
                Ok(())
            }
        }
    }

    fn pred(&mut self, p: &SizePred) -> Result<(), ScriptError> {
        let (l, r, opcode) = match p {
            SizePred::True => return self.num(1),
            SizePred::Not { arg } => {
                self.pred(arg)?;
                self.out.push(OP_NOT);
                return Ok(());
            }
            SizePred::And { left, right } => {
                self.pred(left)?;
                self.pred(right)?;
                self.binop(OP_BOOLAND);
                return Ok(());
            }
            SizePred::Or { left, right } => {
                self.pred(left)?;
                self.pred(right)?;
                self.binop(OP_BOOLOR);
                return Ok(());
            }
            SizePred::Eq { left, right } => (left, right, OP_NUMEQUAL),
            SizePred::Lt { left, right } => (left, right, OP_LESSTHAN),
        };
        self.term(l)?;
        self.term(r)?;
        self.binop(opcode);
        Ok(())
    }

    fn expr(&mut self, e: &ScriptExpr) -> Result<(), ScriptError> {
        match e {
            ScriptExpr::True => {}
            ScriptExpr::CheckSig { key } => {
                self.pick(&Slot::Sig { key: key.clone() })?;
                self.data(&key.pubkey.0)?;
                self.consume(OP_CHECKSIGVERIFY, 2);
            }
            ScriptExpr::CheckMultiAll { keys } => {
                if keys.len() > MAX_MULTISIG_KEYS {
                    return Err(ScriptError::TooManyKeys { count: keys.len() });
                }
                self.num(0)?;
                for key in keys {
                    self.pick(&Slot::Sig { key: key.clone() })?;
                }
                self.num(keys.len() as i64)?;
                for key in keys {
                    self.data(&key.pubkey.0)?;
                }
                self.num(keys.len() as i64)?;
                self.consume(OP_CHECKMULTISIGVERIFY, 2 * keys.len() + 3);
            }
            ScriptExpr::PreimageHashEq { slot, hash } => {
                self.pick(slot)?;
                self.out.push(OP_SHA256);
                self.data(&hash.0)?;
                self.consume(OP_EQUALVERIFY, 2);
            }
            ScriptExpr::SizeEq { slot, size } => {
                self.size_of(slot)?;
                self.num(*size as i64)?;
                self.consume(OP_NUMEQUALVERIFY, 2);
            }
            ScriptExpr::SizeAtLeast { slot, size } => {
                self.size_of(slot)?;
                self.num(*size as i64)?;
                self.binop(OP_GREATERTHANOREQUAL);
                self.consume(OP_VERIFY, 1);
            }
            ScriptExpr::SizeCmp { pred } => {
                self.pred(pred)?;
                self.consume(OP_VERIFY, 1);
            }
            ScriptExpr::And { args } => {
                for a in args {
                    self.expr(a)?;
                }
            }
            ScriptExpr::Or { .. } => return Err(ScriptError::NestedOr),
        }
        Ok(())
    }
}

/// Lowers a script expression to script bytes.
///
/// This checks individual pushes only; use [`assemble_redeem_script`] for
/// scripts that are themselves pushed as P2SH redeem scripts.
pub fn assemble_script(e: &ScriptExpr) -> Result<Vec<u8>, ScriptError> {
    if *e == ScriptExpr::True {
        return Ok(vec![OP_1]);
    }
    let slots = e.slots();
    let mut a = Asm {
        out: Vec::new(),
        slots: &slots,
        extra: 0,
    };
    match e {
        ScriptExpr::Or { args } => {
            if args.len() < 2 {
                return Err(ScriptError::DegenerateOr);
            }
            let last = args.len() - 1;
            for (i, arg) in args.iter().enumerate() {
                a.pick(&Slot::Selector)?;
                a.num(i as i64)?;
                if i < last {
                    a.consume(OP_NUMEQUAL, 1);
                    a.consume(OP_IF, 1);
                    a.expr(arg)?;
                    a.out.push(OP_ELSE);
                } else {
                    a.consume(OP_NUMEQUALVERIFY, 2);
                    a.expr(arg)?;
                }
            }
            a.out.extend(std::iter::repeat_n(OP_ENDIF, last));
        }
        e => a.expr(e)?,
    }
    debug_assert_eq!(a.extra, 0);
    let mut out = a.out;
    out.extend(std::iter::repeat_n(OP_2DROP, slots.len() / 2));
    if slots.len() % 2 == 1 {
        out.push(OP_DROP);
    }
    out.push(OP_1);
    Ok(out)
}

/// [`assemble_script`], additionally enforcing the push limit on the whole
/// script.
pub fn assemble_redeem_script(e: &ScriptExpr) -> Result<Vec<u8>, ScriptError> {
    let bytes = assemble_script(e)?;
    if bytes.len() > MAX_PUSH {
        return Err(ScriptError::ScriptTooLarge { size: bytes.len() });
    }
    Ok(bytes)
}

/// `OP_HASH160 <hash160(redeem)> OP_EQUAL`
pub fn p2sh_script(redeem: &[u8]) -> Vec<u8> {
    let mut out = vec![OP_HASH160, 20];
    out.extend_from_slice(&crate::hash::hash160(redeem));
    out.push(OP_EQUAL);
    out
}

/// `OP_DUP OP_HASH160 <pkh> OP_EQUALVERIFY OP_CHECKSIG`
pub fn p2pkh_script(pubkey_hash: &[u8; 20]) -> Vec<u8> {
    let mut out = vec![OP_DUP, OP_HASH160, 20];
    out.extend_from_slice(pubkey_hash);
    out.extend([OP_EQUALVERIFY, OP_CHECKSIG]);
    out
}

/// Signature verification against the transaction being spent.
pub trait SigChecker {
    fn check_sig(&self, sig: &[u8], pubkey: &PubKey) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpretError {
    #[error("witness lacks {0}")]
    MissingSlot(Slot),
}

/// Witness values keyed by slot.
pub type Witness = BTreeMap<Slot, Vec<u8>>;

const MAX_NUM: i64 = i32::MAX as i64;

struct Eval<'a> {
    witness: &'a Witness,
    checker: &'a dyn SigChecker,
}

impl Eval<'_> {
    fn get(&self, slot: &Slot) -> Result<&[u8], InterpretError> {
        self.witness
            .get(slot)
            .map(Vec::as_slice)
            .ok_or_else(|| InterpretError::MissingSlot(slot.clone()))
    }

    /// `None` when the script would fail on an arithmetic operand wider than
    /// four bytes.
    fn term(&self, t: &SizeTerm) -> Result<Option<i64>, InterpretError> {
        Ok(match t {
            SizeTerm::Const { value } => Some(*value),
            SizeTerm::Size { slot } => Some(self.get(slot)?.len() as i64),
            SizeTerm::Add { left, right } | SizeTerm::Sub { left, right } => {
                let (Some(l), Some(r)) = (self.term(left)?, self.term(right)?) else {
                    return Ok(None);
                };
                if l.abs() > MAX_NUM || r.abs() > MAX_NUM {
                    return Ok(None);
                }
                Some(if matches!(t, SizeTerm::Add { .. }) {
                    l + r
                } else {
                    l - r
                })
            }
        })
    }

    fn pred(&self, p: &SizePred) -> Result<Option<bool>, InterpretError> {
        Ok(match p {
            SizePred::True => Some(true),
            SizePred::Not { arg } => self.pred(arg)?.map(|b| !b),
            SizePred::And { left, right } => match (self.pred(left)?, self.pred(right)?) {
                (Some(l), Some(r)) => Some(l && r),
                _ => None,
            },
            SizePred::Or { left, right } => match (self.pred(left)?, self.pred(right)?) {
                (Some(l), Some(r)) => Some(l || r),
                _ => None,
            },
            SizePred::Eq { left, right } | SizePred::Lt { left, right } => {
                let (Some(l), Some(r)) = (self.term(left)?, self.term(right)?) else {
                    return Ok(None);
                };
                if l.abs() > MAX_NUM || r.abs() > MAX_NUM {
                    return Ok(None);
                }
                Some(if matches!(p, SizePred::Eq { .. }) {
                    l == r
                } else {
                    l < r
                })
            }
        })
    }

    fn sig(&self, key: &KeyRef) -> Result<bool, InterpretError> {
        let sig = self.get(&Slot::Sig { key: key.clone() })?;
        Ok(self.checker.check_sig(sig, &key.pubkey))
    }

    fn expr(&self, e: &ScriptExpr) -> Result<bool, InterpretError> {
        Ok(match e {
            ScriptExpr::True => true,
            ScriptExpr::CheckSig { key } => self.sig(key)?,
            ScriptExpr::CheckMultiAll { keys } => {
                let mut ok = true;
                for k in keys {
                    ok &= self.sig(k)?;
                }
                ok
            }
            ScriptExpr::PreimageHashEq { slot, hash } => sha256(self.get(slot)?) == hash.0,
            ScriptExpr::SizeEq { slot, size } => self.get(slot)?.len() as u64 == *size,
            ScriptExpr::SizeAtLeast { slot, size } => self.get(slot)?.len() as u64 >= *size,
            ScriptExpr::SizeCmp { pred } => self.pred(pred)? == Some(true),
            ScriptExpr::And { args } => {
                let mut ok = true;
                for a in args {
                    ok &= self.expr(a)?;
                }
                ok
            }
            ScriptExpr::Or { args } => {
                let sel = self.get(&Slot::Selector)?;
                match decode_num(sel, 4) {
                    Some(i) if i >= 0 && (i as usize) < args.len() => {
                        self.expr(&args[i as usize])?
                    }
                    _ => false,
                }
            }
        })
    }
}

/// Evaluates `script` on a witness. Every slot of the script must be
/// present, including those of disjuncts the selector does not pick.
pub fn interpret(
    script: &ScriptExpr,
    witness: &Witness,
    checker: &dyn SigChecker,
) -> Result<bool, InterpretError> {
    for slot in script.slots() {
        if !witness.contains_key(&slot) {
            return Err(InterpretError::MissingSlot(slot));
        }
    }
    Eval { witness, checker }.expr(script)
}
