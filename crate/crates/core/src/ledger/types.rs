use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fixed::{Money, Mwh};
use crate::time::{serde_ts, Timestamp};

labeled_enum! {
    pub enum Role {
        Authority => "Authority",
        Dealer => "Dealer",
        Supplier => "Supplier",
        Consumer => "Consumer",
    }
}

labeled_enum! {
    pub enum TxType {
        Buy => "Buy",
        Sell => "Sell",
        Unknown => "Unknown",
    }
}

labeled_enum! {
    pub enum SecurityLevel {
        Low => "Low",
        Medium => "Medium",
        High => "High",
    }
}

labeled_enum! {
    pub enum NetworkSlice {
        SliceA => "SliceA",
        SliceB => "SliceB",
        SliceC => "SliceC",
    }
}

labeled_enum! {
    /// Alphabetical order doubles as the label-encoder order.
    pub enum TxStatus {
        Failed => "Failed",
        Pending => "Pending",
        Success => "Success",
    }
}

/// Hashed, opaque participant identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub String);

impl AccountId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AccountId {
    fn from(s: &str) -> Self {
        AccountId(s.to_string())
    }
}

/// A market participant as the ledger sees it.
///
/// `nonce`, `energy_tokens`, `escrow` and `last_timestamp` are ledger state;
/// the remaining fields are fixed at registration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Account {
    pub account_id: AccountId,
    pub role: Role,
    #[serde(with = "hex_bytes")]
    pub signing_key: Vec<u8>,
    pub origin_address: String,
    /// Largest quantity a single generation reading can legitimately report.
    pub capacity_mwh: Mwh,
    pub nonce: u64,
    pub energy_tokens: Mwh,
    /// Tokens locked by accepted sells that have not settled yet.
    pub escrow: Mwh,
    #[serde(default, with = "opt_ts")]
    pub last_timestamp: Option<Timestamp>,
}

impl Account {
    pub fn new(
        account_id: AccountId,
        role: Role,
        signing_key: Vec<u8>,
        origin_address: impl Into<String>,
        capacity_mwh: Mwh,
    ) -> Self {
        Account {
            account_id,
            role,
            signing_key,
            origin_address: origin_address.into(),
            capacity_mwh,
            nonce: 0,
            energy_tokens: Mwh::ZERO,
            escrow: Mwh::ZERO,
            last_timestamp: None,
        }
    }

    /// Tokens not locked by pending sells.
    pub fn available(&self) -> Mwh {
        self.energy_tokens - self.escrow
    }

    /// The registration-time view of this account (zero state).
    pub fn fresh(&self) -> Account {
        Account::new(
            self.account_id.clone(),
            self.role,
            self.signing_key.clone(),
            self.origin_address.clone(),
            self.capacity_mwh,
        )
    }
}

/// One transaction: the thirteen dataset columns followed by ledger-only
/// fields.
///
/// `Unknown`-typed records are issued by authorities and credit freshly
/// attested generation to `counterparty_id`. Buy and Sell records come in
/// pairs sharing a `settlement_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionRecord {
    pub transaction_id: String,
    #[serde(with = "serde_ts")]
    pub timestamp: Timestamp,
    pub user_role: Role,
    pub transaction_type: TxType,
    pub electricity_quantity: Mwh,
    pub price_per_mwh: Money,
    pub total_cost: Money,
    pub latency_ms: f64,
    pub security_level: SecurityLevel,
    pub encryption_method: String,
    pub zt_authentication: bool,
    pub network_slice_id: NetworkSlice,
    pub transaction_status: TxStatus,
    pub nonce: u64,
    pub account_id: AccountId,
    pub counterparty_id: Option<AccountId>,
    pub settlement_id: Option<String>,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
}

impl TransactionRecord {
    /// Key grouping records that settle together: the settlement id for
    /// trade legs, the transaction id otherwise.
    pub fn group_key(&self) -> &str {
        self.settlement_id.as_deref().unwrap_or(&self.transaction_id)
    }
}

/// Dataset attributes of a record that the ledger does not interpret.
#[derive(Clone, Debug, PartialEq)]
pub struct LegAttributes {
    pub latency_ms: f64,
    pub security_level: SecurityLevel,
    pub encryption_method: String,
    pub zt_authentication: bool,
    pub network_slice_id: NetworkSlice,
    pub transaction_status: TxStatus,
}

impl Default for LegAttributes {
    fn default() -> Self {
        LegAttributes {
            latency_ms: 10.0,
            security_level: SecurityLevel::High,
            encryption_method: "AES-256".to_string(),
            zt_authentication: true,
            network_slice_id: NetworkSlice::SliceA,
            transaction_status: TxStatus::Success,
        }
    }
}

/// Core terms of a record; everything else comes from [`LegAttributes`].
#[derive(Clone, Debug, PartialEq)]
pub struct RecordTerms {
    pub transaction_id: String,
    pub timestamp: Timestamp,
    pub transaction_type: TxType,
    pub quantity: Mwh,
    pub price: Money,
    pub nonce: u64,
    pub counterparty_id: Option<AccountId>,
    pub settlement_id: Option<String>,
}

impl TransactionRecord {
    /// Unsigned record issued by `account`, with `total_cost = quantity × price`.
    pub fn draft(account: &Account, terms: RecordTerms, attrs: &LegAttributes) -> Self {
        TransactionRecord {
            transaction_id: terms.transaction_id,
            timestamp: terms.timestamp,
            user_role: account.role,
            transaction_type: terms.transaction_type,
            electricity_quantity: terms.quantity,
            price_per_mwh: terms.price,
            total_cost: terms.quantity.cost_at(terms.price),
            latency_ms: attrs.latency_ms,
            security_level: attrs.security_level,
            encryption_method: attrs.encryption_method.clone(),
            zt_authentication: attrs.zt_authentication,
            network_slice_id: attrs.network_slice_id,
            transaction_status: attrs.transaction_status,
            nonce: terms.nonce,
            account_id: account.account_id.clone(),
            counterparty_id: terms.counterparty_id,
            settlement_id: terms.settlement_id,
            signature: Vec::new(),
        }
    }
}

labeled_enum! {
    pub enum EventKind {
        TransactionVerified => "TransactionVerified",
        TransactionHeld => "TransactionHeld",
        TransactionReleased => "TransactionReleased",
        TransactionRejected => "TransactionRejected",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEvent {
    /// Position in the event log, starting at 0.
    pub seq: u64,
    pub kind: EventKind,
    pub transaction_id: String,
    #[serde(with = "serde_ts")]
    pub emitted_at: Timestamp,
    pub payload: BTreeMap<String, String>,
}

labeled_enum! {
    pub enum RejectReason {
        InvalidSignature => "InvalidSignature",
        NonPositiveQuantity => "NonPositiveQuantity",
        PriceOutOfBand => "PriceOutOfBand",
        StaleTimestamp => "StaleTimestamp",
        NonceReplay => "NonceReplay",
        InsufficientBalance => "InsufficientBalance",
        /// Role may not issue this transaction type, or the record's role
        /// does not match the account.
        RoleNotPermitted => "RoleNotPermitted",
        /// Counterparty missing or unknown for a record that needs one.
        UnknownCounterparty => "UnknownCounterparty",
        DuplicateTransactionId => "DuplicateTransactionId",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Inclusive price band enforced on every record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceBand {
    pub min: Money,
    pub max: Money,
}

impl Default for PriceBand {
    fn default() -> Self {
        PriceBand {
            min: Money::from_raw(0),
            max: Money::from_raw(10_000),
        }
    }
}

impl PriceBand {
    pub fn contains(&self, p: Money) -> bool {
        self.min <= p && p <= self.max
    }
}

/// Lowercase-only hex encoding for byte fields.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        decode_lower(&s).map_err(serde::de::Error::custom)
    }

    pub fn decode_lower(s: &str) -> Result<Vec<u8>, String> {
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(format!("hex must be lowercase: {s:?}"));
        }
        hex::decode(s).map_err(|e| e.to_string())
    }
}

mod opt_ts {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
        match ts {
            Some(ts) => s.serialize_some(&crate::time::format_ts(ts)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| crate::time::parse_ts(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}
