//! Signing interface and the deterministic test signer.

use thiserror::Error;

use crate::ast::PubKey;
use crate::compiler::KeyRef;
use crate::hash::sha256;

use super::script::SigChecker;
use super::tx::SIGHASH_ALL;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("no signing key for {0}")]
    UnknownKey(String),
}

pub trait Signer {
    fn pubkey(&self, key: &KeyRef) -> PubKey;
    /// Signature over a sighash digest, including the trailing hashtype byte.
    fn sign(&self, key: &KeyRef, digest: &[u8; 32]) -> Result<Vec<u8>, SignError>;
}

const SIG_TAG: &[u8] = b"bitml-test-sig";

/// Deterministic stand-in for ECDSA: `sha256(tag ‖ pubkey ‖ digest) ‖ 0x01`.
///
/// Anyone who knows the public key can forge these signatures and no Bitcoin
/// node accepts them. Transactions signed this way are NOT safe to
/// broadcast; they exist to exercise the compiler with the bundled script
/// interpreter.
#[derive(Debug, Clone, Copy, Default)]
pub struct TestSigner;

pub fn test_signature(pubkey: &PubKey, digest: &[u8; 32]) -> Vec<u8> {
    let mut sig = sha256(&[SIG_TAG, &pubkey.0, digest].concat()).to_vec();
    sig.push(SIGHASH_ALL as u8);
    sig
}

impl Signer for TestSigner {
    fn pubkey(&self, key: &KeyRef) -> PubKey {
        key.pubkey
    }

    fn sign(&self, key: &KeyRef, digest: &[u8; 32]) -> Result<Vec<u8>, SignError> {
        Ok(test_signature(&key.pubkey, digest))
    }
}

/// Verifies test signatures over one fixed digest.
#[derive(Debug, Clone, Copy)]
pub struct TestChecker {
    pub digest: [u8; 32],
}

impl SigChecker for TestChecker {
    fn check_sig(&self, sig: &[u8], pubkey: &PubKey) -> bool {
        sig == test_signature(pubkey, &self.digest).as_slice()
    }
}
