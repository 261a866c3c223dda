//! Proof-of-authority ledger.
//!
//! Records are verified on submission and queued; [`Ledger::append_block`]
//! seals them into a block signed by the validator whose turn it is and
//! emits one `TransactionVerified` event per record. Token transfers happen
//! when a settlement group is finalized, which a hold can postpone until a
//! reviewer releases or rejects it.

mod chain;
mod codec;
mod crypto;
mod engine;
mod state;
mod types;

pub use chain::{block_hash, header_bytes, read_chain, read_events, write_chain, write_events, Block, ChainHeader, PersistError};
pub use codec::{canonical_bytes, decode_canonical, DecodeError};
pub use crypto::{hex32, sha256, Hash32, KeyedHash, SignatureScheme, HASH_NAME};
pub use engine::{ChainFault, EventListener, Ledger, LedgerConfig, LedgerError, TxPhase};
pub use state::{Effect, Group, Outcome, State};
pub use types::{
    hex_bytes, Account, AccountId, EventKind, LedgerEvent, LegAttributes, RecordTerms, NetworkSlice, PriceBand, RejectReason, Role,
    SecurityLevel, TransactionRecord, TxStatus, TxType, Verdict,
};
