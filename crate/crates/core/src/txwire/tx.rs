//! Legacy transaction wire format.

use serde::Serialize;
use thiserror::Error;

use crate::ast::Txid;
use crate::hash::sha256d;

pub const TX_VERSION: u32 = 2;
pub const SEQUENCE_FINAL: u32 = 0xFFFF_FFFF;
/// Sequence of inputs of locktimed transactions.
pub const SEQUENCE_LOCKTIME: u32 = 0xFFFF_FFFE;
pub const SIGHASH_ALL: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TxIn {
    /// Internal byte order, as serialized.
    #[serde(serialize_with = "hex_bytes")]
    pub prev_txid: [u8; 32],
    pub prev_vout: u32,
    #[serde(serialize_with = "hex_bytes")]
    pub script_sig: Vec<u8>,
    pub sequence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TxOut {
    pub value: u64,
    #[serde(serialize_with = "hex_bytes")]
    pub script_pubkey: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RawTx {
    pub version: u32,
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    pub locktime: u32,
}

fn hex_bytes<T: AsRef<[u8]>, S: serde::Serializer>(b: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("malformed transaction at byte {offset}: {reason}")]
    MalformedBytes { offset: usize, reason: String },
    #[error("input index {index} out of range for a transaction with {inputs} input(s)")]
    IndexOutOfRange { index: usize, inputs: usize },
}

pub fn write_compact_size(out: &mut Vec<u8>, n: u64) {
    match n {
        0..=0xfc => out.push(n as u8),
        0xfd..=0xffff => {
            out.push(0xfd);
            out.extend_from_slice(&(n as u16).to_le_bytes());
        }
        0x1_0000..=0xffff_ffff => {
            out.push(0xfe);
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        _ => {
            out.push(0xff);
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
}

fn write_bytes(out: &mut Vec<u8>, b: &[u8]) {
    write_compact_size(out, b.len() as u64);
    out.extend_from_slice(b);
}

impl RawTx {
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.version.to_le_bytes());
        write_compact_size(&mut out, self.inputs.len() as u64);
        for i in &self.inputs {
            out.extend_from_slice(&i.prev_txid);
            out.extend_from_slice(&i.prev_vout.to_le_bytes());
            write_bytes(&mut out, &i.script_sig);
            out.extend_from_slice(&i.sequence.to_le_bytes());
        }
        write_compact_size(&mut out, self.outputs.len() as u64);
        for o in &self.outputs {
            out.extend_from_slice(&o.value.to_le_bytes());
            write_bytes(&mut out, &o.script_pubkey);
        }
        out.extend_from_slice(&self.locktime.to_le_bytes());
        out
    }

    /// Parses exactly one transaction; trailing bytes are an error.
    pub fn deserialize(bytes: &[u8]) -> Result<RawTx, TxError> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.u32()?;
        let n_in = r.count(41)?;
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            inputs.push(TxIn {
                prev_txid: r.array()?,
                prev_vout: r.u32()?,
                script_sig: r.var_bytes()?,
                sequence: r.u32()?,
            });
        }
        let n_out = r.count(9)?;
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            outputs.push(TxOut {
                value: u64::from_le_bytes(r.array()?),
                script_pubkey: r.var_bytes()?,
            });
        }
        let locktime = r.u32()?;
        if r.pos != bytes.len() {
            return Err(r.error(format!("{} trailing byte(s)", bytes.len() - r.pos)));
        }
        Ok(RawTx {
            version,
            inputs,
            outputs,
            locktime,
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.serialize())
    }

    /// Double SHA-256 of the serialization, in display (reversed) order.
    pub fn txid(&self) -> Txid {
        let mut h = sha256d(&self.serialize());
        h.reverse();
        Txid(h)
    }

    /// Legacy `SIGHASH_ALL` digest of input `index` with `script_code` in
    /// place of its script and every other input script blanked.
    pub fn sighash_all(&self, index: usize, script_code: &[u8]) -> Result<[u8; 32], TxError> {
        if index >= self.inputs.len() {
            return Err(TxError::IndexOutOfRange {
                index,
                inputs: self.inputs.len(),
            });
        }
        let mut copy = self.clone();
        for (i, input) in copy.inputs.iter_mut().enumerate() {
            input.script_sig = if i == index {
                script_code.to_vec()
            } else {
                Vec::new()
            };
        }
        let mut bytes = copy.serialize();
        bytes.extend_from_slice(&SIGHASH_ALL.to_le_bytes());
        Ok(sha256d(&bytes))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn error(&self, reason: String) -> TxError {
        TxError::MalformedBytes {
            offset: self.pos,
            reason,
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8], TxError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!(
                "need {n} byte(s), {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TxError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, TxError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn compact_size(&mut self) -> Result<u64, TxError> {
        let start = self.pos;
        let (n, min) = match self.array::<1>()?[0] {
            0xfd => (u16::from_le_bytes(self.array()?) as u64, 0xfd),
            0xfe => (u32::from_le_bytes(self.array()?) as u64, 0x1_0000),
            0xff => (u64::from_le_bytes(self.array()?), 0x1_0000_0000),
            b => (b as u64, 0),
        };
        if n < min {
            self.pos = start;
            return Err(self.error("non-canonical compact size".into()));
        }
        Ok(n)
    }

    /// A count of items of at least `item_size` bytes each, bounded by the
    /// remaining input.
    fn count(&mut self, item_size: usize) -> Result<usize, TxError> {
        let n = self.compact_size()?;
        let left = (self.bytes.len() - self.pos) as u64;
        if n > left / item_size as u64 {
            return Err(self.error(format!("count {n} exceeds the remaining {left} byte(s)")));
        }
        Ok(n as usize)
    }

    fn var_bytes(&mut self) -> Result<Vec<u8>, TxError> {
        let n = self.count(1)?;
        Ok(self.take(n)?.to_vec())
    }
}
