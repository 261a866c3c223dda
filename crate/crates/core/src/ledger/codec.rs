//! Canonical, injective byte encoding of transaction records.
//!
//! Layout: the dataset columns in schema order, then `nonce`, `account_id`,
//! `counterparty_id` and `settlement_id`. Strings (including enum labels and
//! the timestamp's ISO-8601 text) are a little-endian `u32` length followed by
//! UTF-8 bytes; fixed-point numbers are their scaled `i64`; `latency_ms` is its
//! IEEE-754 bit pattern; booleans and option tags are a single `0`/`1` byte.
//! The signature is not part of the encoding.

use crate::fixed::{Money, Mwh};
use crate::time::{format_ts, parse_ts};

use super::types::{AccountId, TransactionRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("invalid utf-8 at byte {0}")]
    Utf8(usize),
    #[error("invalid flag byte {value} at byte {offset}")]
    Flag { offset: usize, value: u8 },
    #[error("invalid field value: {0}")]
    Field(String),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

struct Writer(Vec<u8>);

impl Writer {
    fn str(&mut self, s: &str) {
        self.0.extend_from_slice(&(s.len() as u32).to_le_bytes());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn flag(&mut self, b: bool) {
        self.0.push(b as u8);
    }
    fn opt_str(&mut self, s: Option<&str>) {
        self.flag(s.is_some());
        if let Some(s) = s {
            self.str(s);
        }
    }
}

/// Canonical bytes of everything except the signature.
pub fn canonical_bytes(tx: &TransactionRecord) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(256));
    w.str(&tx.transaction_id);
    w.str(&format_ts(&tx.timestamp));
    w.str(tx.user_role.as_str());
    w.str(tx.transaction_type.as_str());
    w.i64(tx.electricity_quantity.raw());
    w.i64(tx.price_per_mwh.raw());
    w.i64(tx.total_cost.raw());
    w.u64(tx.latency_ms.to_bits());
    w.str(tx.security_level.as_str());
    w.str(&tx.encryption_method);
    w.flag(tx.zt_authentication);
    w.str(tx.network_slice_id.as_str());
    w.str(tx.transaction_status.as_str());
    w.u64(tx.nonce);
    w.str(tx.account_id.as_str());
    w.opt_str(tx.counterparty_id.as_ref().map(|a| a.as_str()));
    w.opt_str(tx.settlement_id.as_deref());
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated(self.pos))?;
        let out = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated(self.pos))?;
        self.pos = end;
        Ok(out)
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<&'a str, DecodeError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        let at = self.pos;
        std::str::from_utf8(self.take(len)?).map_err(|_| DecodeError::Utf8(at))
    }
    fn flag(&mut self) -> Result<bool, DecodeError> {
        let at = self.pos;
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            value => Err(DecodeError::Flag { offset: at, value }),
        }
    }
    fn opt_str(&mut self) -> Result<Option<&'a str>, DecodeError> {
        if self.flag()? {
            self.str().map(Some)
        } else {
            Ok(None)
        }
    }
    fn label<T: std::str::FromStr>(&mut self) -> Result<T, DecodeError>
    where
        T::Err: std::fmt::Display,
    {
        self.str()?.parse().map_err(|e: T::Err| DecodeError::Field(e.to_string()))
    }
}

/// Inverse of [`canonical_bytes`]. The returned record has an empty signature.
pub fn decode_canonical(bytes: &[u8]) -> Result<TransactionRecord, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let transaction_id = r.str()?.to_string();
    let timestamp = parse_ts(r.str()?).map_err(|e| DecodeError::Field(e.to_string()))?;
    let user_role = r.label()?;
    let transaction_type = r.label()?;
    let electricity_quantity = Mwh::from_raw(r.i64()?);
    let price_per_mwh = Money::from_raw(r.i64()?);
    let total_cost = Money::from_raw(r.i64()?);
    let latency_ms = f64::from_bits(r.u64()?);
    let security_level = r.label()?;
    let encryption_method = r.str()?.to_string();
    let zt_authentication = r.flag()?;
    let network_slice_id = r.label()?;
    let transaction_status = r.label()?;
    let nonce = r.u64()?;
    let account_id = AccountId(r.str()?.to_string());
    let counterparty_id = r.opt_str()?.map(AccountId::from);
    let settlement_id = r.opt_str()?.map(str::to_string);
    if r.pos != bytes.len() {
        return Err(DecodeError::Trailing(bytes.len() - r.pos));
    }
    Ok(TransactionRecord {
        transaction_id,
        timestamp,
        user_role,
        transaction_type,
        electricity_quantity,
        price_per_mwh,
        total_cost,
        latency_ms,
        security_level,
        encryption_method,
        zt_authentication,
        network_slice_id,
        transaction_status,
        nonce,
        account_id,
        counterparty_id,
        settlement_id,
        signature: Vec::new(),
    })
}
