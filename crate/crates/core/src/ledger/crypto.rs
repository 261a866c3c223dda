//! Hashing and pluggable signatures.

use sha2::{Digest, Sha256};

pub type Hash32 = [u8; 32];

/// Name recorded in chain headers for [`sha256`].
pub const HASH_NAME: &str = "sha256";

pub fn sha256(bytes: &[u8]) -> Hash32 {
    Sha256::digest(bytes).into()
}

/// A signature scheme the ledger can sign blocks and check records with.
pub trait SignatureScheme: Send + Sync {
    /// Stable identifier written to the chain header.
    fn name(&self) -> &'static str;
    fn sign(&self, key: &[u8], msg: &[u8]) -> Vec<u8>;
    fn verify(&self, key: &[u8], msg: &[u8], signature: &[u8]) -> bool;
}

/// `sig = SHA-256(key ‖ msg)`. Symmetric: whoever verifies holds the key.
#[derive(Clone, Copy, Debug, Default)]
pub struct KeyedHash;

impl SignatureScheme for KeyedHash {
    fn name(&self) -> &'static str {
        "keyed-sha256"
    }

    fn sign(&self, key: &[u8], msg: &[u8]) -> Vec<u8> {
        assert!(!key.is_empty(), "signing key must be non-empty");
        let mut h = Sha256::new();
        h.update(key);
        h.update(msg);
        h.finalize().to_vec()
    }

    fn verify(&self, key: &[u8], msg: &[u8], signature: &[u8]) -> bool {
        !key.is_empty() && self.sign(key, msg) == signature
    }
}

/// Lowercase hex of a digest.
pub fn hex32(h: &Hash32) -> String {
    hex::encode(h)
}
