//! Opcode-level reference evaluator for the subset of Bitcoin script the
//! assembler emits plus the standard P2PKH and P2SH templates.
//!
//! It is an independent check of [`assemble_script`](super::assemble_script)
//! against [`interpret`](super::interpret), not a consensus implementation.

use thiserror::Error;

use crate::ast::PubKey;
use crate::hash::{hash160, sha256};

use super::script::op::*;
use super::script::{decode_num, encode_num, SigChecker, MAX_PUSH};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("script truncated at byte {0}")]
    Truncated(usize),
    #[error("unsupported opcode {0:#04x}")]
    Unsupported(u8),
    #[error("stack underflow at byte {0}")]
    Underflow(usize),
    #[error("invalid number operand at byte {0}")]
    BadNumber(usize),
    #[error("verify failed at byte {0}")]
    VerifyFailed(usize),
    #[error("unbalanced conditional")]
    UnbalancedIf,
    #[error("push of {0} bytes")]
    PushTooLarge(usize),
    #[error("script signature is not push-only")]
    NotPushOnly,
    #[error("script finished with a false top item")]
    False,
}

pub type Stack = Vec<Vec<u8>>;

pub fn cast_to_bool(v: &[u8]) -> bool {
    match v.split_last() {
        None => false,
        Some((&last, rest)) => rest.iter().any(|&b| b != 0) || (last != 0 && last != 0x80),
    }
}

fn bool_item(b: bool) -> Vec<u8> {
    if b {
        vec![1]
    } else {
        Vec::new()
    }
}

/// Reads the instruction at `pc`: opcode and, for pushes, its payload.
fn next_op(script: &[u8], pc: &mut usize) -> Result<(u8, Option<Vec<u8>>), VmError> {
    let at = *pc;
    let opcode = script[at];
    *pc += 1;
    let len = match opcode {
        0x01..=0x4b => opcode as usize,
        OP_PUSHDATA1 | OP_PUSHDATA2 | OP_PUSHDATA4 => {
            let w = match opcode {
                OP_PUSHDATA1 => 1,
                OP_PUSHDATA2 => 2,
                _ => 4,
            };
            let b = script.get(*pc..*pc + w).ok_or(VmError::Truncated(at))?;
            *pc += w;
            b.iter().rev().fold(0usize, |acc, &x| acc << 8 | x as usize)
        }
        _ => return Ok((opcode, None)),
    };
    let data = script.get(*pc..*pc + len).ok_or(VmError::Truncated(at))?;
    *pc += len;
    if len > MAX_PUSH {
        return Err(VmError::PushTooLarge(len));
    }
    Ok((opcode, Some(data.to_vec())))
}

/// Runs `script` on `stack`.
pub fn execute(script: &[u8], stack: &mut Stack, checker: &dyn SigChecker) -> Result<(), VmError> {
    let mut exec: Vec<bool> = Vec::new();
    let mut pc = 0;
    while pc < script.len() {
        let at = pc;
        let (opcode, data) = next_op(script, &mut pc)?;
        let running = exec.iter().all(|&b| b);
        match opcode {
            OP_IF | OP_NOTIF => {
                let mut cond = false;
                if running {
                    cond = cast_to_bool(&stack.pop().ok_or(VmError::Underflow(at))?);
                    if opcode == OP_NOTIF {
                        cond = !cond;
                    }
                }
                exec.push(cond);
                continue;
            }
            OP_ELSE => {
                let top = exec.last_mut().ok_or(VmError::UnbalancedIf)?;
                *top = !*top;
                continue;
            }
            OP_ENDIF => {
                exec.pop().ok_or(VmError::UnbalancedIf)?;
                continue;
            }
            _ => {}
        }
        if !running {
            continue;
        }
        if let Some(d) = data {
            stack.push(d);
            continue;
        }
        step(opcode, at, stack, checker)?;
    }
    if !exec.is_empty() {
        return Err(VmError::UnbalancedIf);
    }
    Ok(())
}

fn pop(stack: &mut Stack, at: usize) -> Result<Vec<u8>, VmError> {
    stack.pop().ok_or(VmError::Underflow(at))
}

fn pop_num(stack: &mut Stack, at: usize) -> Result<i64, VmError> {
    decode_num(&pop(stack, at)?, 4).ok_or(VmError::BadNumber(at))
}

fn pubkey(bytes: &[u8]) -> Option<PubKey> {
    Some(PubKey(bytes.try_into().ok()?))
}

fn step(opcode: u8, at: usize, stack: &mut Stack, checker: &dyn SigChecker) -> Result<(), VmError> {
    match opcode {
        OP_0 => stack.push(Vec::new()),
        OP_1NEGATE => stack.push(encode_num(-1)),
        OP_1..=OP_16 => stack.push(encode_num((opcode - OP_1 + 1) as i64)),
        OP_VERIFY => {
            if !cast_to_bool(&pop(stack, at)?) {
                return Err(VmError::VerifyFailed(at));
            }
        }
        OP_DROP => {
            pop(stack, at)?;
        }
        OP_2DROP => {
            pop(stack, at)?;
            pop(stack, at)?;
        }
        OP_DUP => {
            let top = stack.last().ok_or(VmError::Underflow(at))?.clone();
            stack.push(top);
        }
        OP_NIP => {
            let top = pop(stack, at)?;
            pop(stack, at)?;
            stack.push(top);
        }
        OP_PICK => {
            let n = pop_num(stack, at)?;
            if n < 0 || n as usize >= stack.len() {
                return Err(VmError::Underflow(at));
            }
            let item = stack[stack.len() - 1 - n as usize].clone();
            stack.push(item);
        }
        OP_SIZE => {
            let n = stack.last().ok_or(VmError::Underflow(at))?.len();
            stack.push(encode_num(n as i64));
        }
        OP_EQUAL | OP_EQUALVERIFY => {
            let b = pop(stack, at)?;
            let a = pop(stack, at)?;
            if opcode == OP_EQUALVERIFY {
                if a != b {
                    return Err(VmError::VerifyFailed(at));
                }
            } else {
                stack.push(bool_item(a == b));
            }
        }
        OP_NOT => {
            let a = pop_num(stack, at)?;
            stack.push(bool_item(a == 0));
        }
        OP_ADD
        | OP_SUB
        | OP_BOOLAND
        | OP_BOOLOR
        | OP_NUMEQUAL
        | OP_NUMEQUALVERIFY
        | OP_LESSTHAN
        | OP_GREATERTHANOREQUAL => {
            let b = pop_num(stack, at)?;
            let a = pop_num(stack, at)?;
            let r = match opcode {
                OP_ADD => a + b,
                OP_SUB => a - b,
                OP_BOOLAND => (a != 0 && b != 0) as i64,
                OP_BOOLOR => (a != 0 || b != 0) as i64,
                OP_NUMEQUAL | OP_NUMEQUALVERIFY => (a == b) as i64,
                OP_LESSTHAN => (a < b) as i64,
                _ => (a >= b) as i64,
            };
            if opcode == OP_NUMEQUALVERIFY {
                if r == 0 {
                    return Err(VmError::VerifyFailed(at));
                }
            } else {
                stack.push(encode_num(r));
            }
        }
        OP_SHA256 => {
            let a = pop(stack, at)?;
            stack.push(sha256(&a).to_vec());
        }
        OP_HASH160 => {
            let a = pop(stack, at)?;
            stack.push(hash160(&a).to_vec());
        }
        OP_CHECKSIG | OP_CHECKSIGVERIFY => {
            let pk = pop(stack, at)?;
            let sig = pop(stack, at)?;
            let ok = pubkey(&pk).is_some_and(|pk| checker.check_sig(&sig, &pk));
            if opcode == OP_CHECKSIGVERIFY {
                if !ok {
                    return Err(VmError::VerifyFailed(at));
                }
            } else {
                stack.push(bool_item(ok));
            }
        }
        OP_CHECKMULTISIG | OP_CHECKMULTISIGVERIFY => {
            let n = pop_num(stack, at)?;
            if !(0..=20).contains(&n) {
                return Err(VmError::BadNumber(at));
            }
            let mut keys = (0..n)
                .map(|_| pop(stack, at))
                .collect::<Result<Vec<_>, _>>()?;
            keys.reverse();
            let m = pop_num(stack, at)?;
            if !(0..=n).contains(&m) {
                return Err(VmError::BadNumber(at));
            }
            let mut sigs = (0..m)
                .map(|_| pop(stack, at))
                .collect::<Result<Vec<_>, _>>()?;
            sigs.reverse();
            pop(stack, at)?;
            let mut k = 0;
            let mut matched = 0;
            for sig in &sigs {
                while k < keys.len()
                    && !pubkey(&keys[k]).is_some_and(|pk| checker.check_sig(sig, &pk))
                {
                    k += 1;
                }
                if k == keys.len() {
                    break;
                }
                k += 1;
                matched += 1;
            }
            let ok = matched == sigs.len();
            if opcode == OP_CHECKMULTISIGVERIFY {
                if !ok {
                    return Err(VmError::VerifyFailed(at));
                }
            } else {
                stack.push(bool_item(ok));
            }
        }
        other => return Err(VmError::Unsupported(other)),
    }
    Ok(())
}

fn is_push_only(script: &[u8]) -> Result<bool, VmError> {
    let mut pc = 0;
    while pc < script.len() {
        let (opcode, data) = next_op(script, &mut pc)?;
        if data.is_none()
            && opcode != OP_0
            && opcode != OP_1NEGATE
            && !(OP_1..=OP_16).contains(&opcode)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

fn is_p2sh(script_pubkey: &[u8]) -> bool {
    script_pubkey.len() == 23
        && script_pubkey[0] == OP_HASH160
        && script_pubkey[1] == 20
        && script_pubkey[22] == OP_EQUAL
}

fn truthy_top(stack: &Stack) -> Result<(), VmError> {
    match stack.last() {
        Some(top) if cast_to_bool(top) => Ok(()),
        _ => Err(VmError::False),
    }
}

/// Runs a redeem script on witness items pushed bottom first.
pub fn run_redeem(
    redeem: &[u8],
    items: &[Vec<u8>],
    checker: &dyn SigChecker,
) -> Result<(), VmError> {
    let mut stack = items.to_vec();
    execute(redeem, &mut stack, checker)?;
    truthy_top(&stack)
}

/// Validates one input: the script signature, then the output script, then
/// for P2SH outputs the redeem script on the remaining pushes.
pub fn verify_input(
    script_sig: &[u8],
    script_pubkey: &[u8],
    checker: &dyn SigChecker,
) -> Result<(), VmError> {
    if !is_push_only(script_sig)? {
        return Err(VmError::NotPushOnly);
    }
    let mut stack = Stack::new();
    execute(script_sig, &mut stack, checker)?;
    let saved = stack.clone();
    execute(script_pubkey, &mut stack, checker)?;
    truthy_top(&stack)?;
    if is_p2sh(script_pubkey) {
        let mut stack = saved;
        let redeem = stack.pop().ok_or(VmError::Underflow(0))?;
        execute(&redeem, &mut stack, checker)?;
        truthy_top(&stack)?;
    }
    Ok(())
}
