//! Blocks, chain headers and their JSON-Lines persistence.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::time::{format_ts, serde_ts, Timestamp};

use super::codec::canonical_bytes;
use super::crypto::{sha256, Hash32};
use super::types::{hex_bytes, AccountId, LedgerEvent, TransactionRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    #[serde(with = "hex32")]
    pub prev_hash: Hash32,
    #[serde(with = "serde_ts")]
    pub timestamp: Timestamp,
    pub validator_id: AccountId,
    pub transactions: Vec<TransactionRecord>,
    #[serde(with = "hex32")]
    pub block_hash: Hash32,
    #[serde(with = "hex_bytes")]
    pub validator_signature: Vec<u8>,
}

fn put_lp(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Bytes the validator signs (through their hash): every block field except
/// `block_hash` and the signature itself. Transaction signatures are included.
pub fn header_bytes(
    height: u64,
    prev_hash: &Hash32,
    timestamp: &Timestamp,
    validator_id: &AccountId,
    transactions: &[TransactionRecord],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + transactions.len() * 320);
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(prev_hash);
    put_lp(&mut out, format_ts(timestamp).as_bytes());
    put_lp(&mut out, validator_id.as_str().as_bytes());
    out.extend_from_slice(&(transactions.len() as u32).to_le_bytes());
    for tx in transactions {
        put_lp(&mut out, &canonical_bytes(tx));
        put_lp(&mut out, &tx.signature);
    }
    out
}

/// `H(header ‖ len ‖ signature)`.
pub fn block_hash(header: &[u8], signature: &[u8]) -> Hash32 {
    let mut buf = Vec::with_capacity(header.len() + signature.len() + 4);
    buf.extend_from_slice(header);
    put_lp(&mut buf, signature);
    sha256(&buf)
}

impl Block {
    pub fn header_bytes(&self) -> Vec<u8> {
        header_bytes(
            self.height,
            &self.prev_hash,
            &self.timestamp,
            &self.validator_id,
            &self.transactions,
        )
    }

    pub fn computed_hash(&self) -> Hash32 {
        block_hash(&self.header_bytes(), &self.validator_signature)
    }
}

/// Self-description stored next to the chain file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainHeader {
    pub hash_function: String,
    pub signature_scheme: String,
    pub validators: Vec<AccountId>,
    pub block_size: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {0}: blank or unterminated line")]
    Malformed(usize),
    #[error("unsupported {what} {found:?}")]
    Unsupported { what: &'static str, found: String },
    #[error("{0}")]
    Invalid(String),
}

/// Writes one JSON object per line, each terminated by `\n`.
pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), PersistError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| PersistError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads lines written by [`write_jsonl`]. Every line, including the last,
/// must be newline-terminated and non-empty.
pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(mut r: R) -> Result<Vec<T>, PersistError> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    let mut line = 0;
    loop {
        buf.clear();
        if r.read_until(b'\n', &mut buf)? == 0 {
            return Ok(out);
        }
        line += 1;
        if buf.pop() != Some(b'\n') || buf.is_empty() {
            return Err(PersistError::Malformed(line));
        }
        let item = serde_json::from_slice(&buf).map_err(|source| PersistError::Json { line, source })?;
        out.push(item);
    }
}

pub fn write_chain<W: Write>(w: W, blocks: &[Block]) -> Result<(), PersistError> {
    write_jsonl(w, blocks)
}

pub fn read_chain<R: BufRead>(r: R) -> Result<Vec<Block>, PersistError> {
    read_jsonl(r)
}

pub fn write_events<W: Write>(w: W, events: &[LedgerEvent]) -> Result<(), PersistError> {
    write_jsonl(w, events)
}

pub fn read_events<R: BufRead>(r: R) -> Result<Vec<LedgerEvent>, PersistError> {
    read_jsonl(r)
}

mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Hash32;

    pub fn serialize<S: Serializer>(h: &Hash32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(h))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Hash32, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        let bytes = super::hex_bytes::decode_lower(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected a 32-byte digest"))
    }
}
