use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fixed::Mwh;
use crate::time::Timestamp;

use super::chain::{self, block_hash, header_bytes, Block, ChainHeader, PersistError};
use super::crypto::{sha256, KeyedHash, SignatureScheme, HASH_NAME};
use super::state::{HoldError, Outcome, State};
use super::types::{
    Account, AccountId, EventKind, LedgerEvent, PriceBand, Role, TransactionRecord, TxStatus, Verdict,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub price_band: PriceBand,
    /// Accepted transactions per block.
    pub block_size: usize,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            price_band: PriceBand::default(),
            block_size: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("no pending transactions to seal")]
    EmptyBatch,
    #[error("no validators configured")]
    NoValidators,
    #[error("validator {0} is not a registered authority")]
    NotAnAuthority(AccountId),
    #[error("account {0} registered twice")]
    DuplicateAccount(AccountId),
    #[error("unknown transaction {0}")]
    UnknownTransaction(String),
    #[error("transaction {0} is already finalized")]
    AlreadyFinalized(String),
    #[error("transaction {0} is already held")]
    AlreadyHeld(String),
    #[error("transaction {0} has no open hold")]
    NoOpenHold(String),
}

impl LedgerError {
    fn from_hold(e: HoldError, tx_id: &str) -> Self {
        let id = tx_id.to_string();
        match e {
            HoldError::UnknownTransaction => LedgerError::UnknownTransaction(id),
            HoldError::AlreadyFinalized => LedgerError::AlreadyFinalized(id),
            HoldError::AlreadyHeld => LedgerError::AlreadyHeld(id),
            HoldError::NoOpenHold => LedgerError::NoOpenHold(id),
        }
    }
}

/// Where and why [`Ledger::validate_chain`] failed.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("chain invalid at height {height}: {reason}")]
pub struct ChainFault {
    pub height: u64,
    pub reason: String,
}

/// Settlement progress of one transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxPhase {
    /// Accepted, waiting for a block.
    Pending,
    /// In a block, tokens not moved yet.
    Verified,
    Held,
    Settled,
    Reverted,
}

/// Reacts to events as blocks are sealed, e.g. by placing holds.
pub trait EventListener {
    fn on_event(&mut self, ledger: &mut Ledger, event: &LedgerEvent);
}

impl<F: FnMut(&mut Ledger, &LedgerEvent)> EventListener for F {
    fn on_event(&mut self, ledger: &mut Ledger, event: &LedgerEvent) {
        self(ledger, event)
    }
}

/// Persisted snapshot of the parts of a ledger that are not the chain or
/// the event log.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    config: LedgerConfig,
    state: State,
    pending: Vec<TransactionRecord>,
    finalize_marks: Vec<u64>,
}

const CHAIN_FILE: &str = "chain.jsonl";
const EVENTS_FILE: &str = "events.jsonl";
const HEADER_FILE: &str = "chain_header.json";
const ACCOUNTS_FILE: &str = "accounts.json";
const STATE_FILE: &str = "state.json";

/// Single-writer proof-of-authority ledger.
#[derive(Clone)]
pub struct Ledger {
    scheme: Arc<dyn SignatureScheme>,
    config: LedgerConfig,
    registry: BTreeMap<AccountId, Account>,
    validators: Vec<AccountId>,
    blocks: Vec<Block>,
    pending: Vec<TransactionRecord>,
    events: Vec<LedgerEvent>,
    /// Event-log length at each settlement sweep, so replay can reproduce
    /// when tokens moved relative to holds.
    finalize_marks: Vec<u64>,
    state: State,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("scheme", &self.scheme.name())
            .field("height", &self.blocks.len())
            .field("pending", &self.pending.len())
            .field("events", &self.events.len())
            .finish()
    }
}

impl Ledger {
    /// Ledger with the default keyed-hash signatures.
    pub fn new(
        config: LedgerConfig,
        accounts: impl IntoIterator<Item = Account>,
        validators: Vec<AccountId>,
    ) -> Result<Self, LedgerError> {
        Self::with_scheme(config, Arc::new(KeyedHash), accounts, validators)
    }

    pub fn with_scheme(
        config: LedgerConfig,
        scheme: Arc<dyn SignatureScheme>,
        accounts: impl IntoIterator<Item = Account>,
        validators: Vec<AccountId>,
    ) -> Result<Self, LedgerError> {
        let mut registry = BTreeMap::new();
        for a in accounts {
            let a = a.fresh();
            if registry.insert(a.account_id.clone(), a.clone()).is_some() {
                return Err(LedgerError::DuplicateAccount(a.account_id));
            }
        }
        if validators.is_empty() {
            return Err(LedgerError::NoValidators);
        }
        for v in &validators {
            if registry.get(v).map(|a| a.role) != Some(Role::Authority) {
                return Err(LedgerError::NotAnAuthority(v.clone()));
            }
        }
        let state = State::genesis(registry.values().cloned());
        Ok(Ledger {
            scheme,
            config,
            registry,
            validators,
            blocks: Vec::new(),
            pending: Vec::new(),
            events: Vec::new(),
            finalize_marks: Vec::new(),
            state,
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn scheme(&self) -> &dyn SignatureScheme {
        self.scheme.as_ref()
    }

    /// Signs `tx` in place with `key` under this ledger's scheme.
    pub fn sign_record(&self, tx: &mut TransactionRecord, key: &[u8]) {
        tx.signature = self.scheme.sign(key, &super::codec::canonical_bytes(tx));
    }

    pub fn validators(&self) -> &[AccountId] {
        &self.validators
    }

    pub fn account(&self, id: &AccountId) -> Option<&Account> {
        self.state.accounts.get(id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.state.accounts.values()
    }

    /// Accounts as registered, with zero state.
    pub fn registry(&self) -> impl Iterator<Item = &Account> {
        self.registry.values()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending(&self) -> &[TransactionRecord] {
        &self.pending
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn total_tokens(&self) -> Mwh {
        self.state.total_tokens()
    }

    /// All sealed transactions in chain order.
    pub fn chain_transactions(&self) -> impl Iterator<Item = &TransactionRecord> {
        self.blocks.iter().flat_map(|b| b.transactions.iter())
    }

    /// Recorded status, or `Failed` once a reviewer has rejected the record.
    pub fn effective_status(&self, tx: &TransactionRecord) -> TxStatus {
        self.state
            .status_override
            .get(&tx.transaction_id)
            .copied()
            .unwrap_or(tx.transaction_status)
    }

    pub fn phase(&self, tx_id: &str) -> Option<TxPhase> {
        let (_, g) = self.state.group_of(tx_id)?;
        let pos = g.legs.iter().position(|l| l == tx_id)?;
        Some(match g.outcome {
            Outcome::Settled => TxPhase::Settled,
            Outcome::Reverted => TxPhase::Reverted,
            Outcome::Open if pos >= g.chained => TxPhase::Pending,
            Outcome::Open if self.state.holds.contains(tx_id) => TxPhase::Held,
            Outcome::Open => TxPhase::Verified,
        })
    }

    /// Checks `tx` against the current state, including pending records.
    pub fn verify_transaction(&self, tx: &TransactionRecord) -> Verdict {
        self.state.check(tx, self.scheme.as_ref(), &self.config.price_band)
    }

    /// Verifies and, on acceptance, queues `tx` for the next block.
    pub fn submit(&mut self, tx: TransactionRecord) -> Verdict {
        self.submit_all(vec![tx])
    }

    /// Accepts every record or none. Records are checked in order, each
    /// against the state left by the previous ones.
    pub fn submit_all(&mut self, txs: Vec<TransactionRecord>) -> Verdict {
        let mut undo = Vec::with_capacity(txs.len());
        for tx in &txs {
            let verdict = self.verify_transaction(tx);
            if !verdict.is_accept() {
                for u in undo.into_iter().rev() {
                    self.state.undo(u);
                }
                return verdict;
            }
            undo.push(self.state.accept(tx));
        }
        self.pending.extend(txs);
        Verdict::Accept
    }

    pub fn block_due(&self) -> bool {
        self.pending.len() >= self.config.block_size
    }

    /// Seals up to `block_size` pending records into a block signed by the
    /// scheduled validator and emits one `TransactionVerified` per record.
    /// Tokens move at the next [`Ledger::finalize_unheld`].
    pub fn append_block(&mut self) -> Result<&Block, LedgerError> {
        if self.pending.is_empty() {
            return Err(LedgerError::EmptyBatch);
        }
        let n = self.pending.len().min(self.config.block_size.max(1));
        let transactions: Vec<TransactionRecord> = self.pending.drain(..n).collect();
        let height = self.blocks.len() as u64;
        let prev_hash = self.blocks.last().map_or([0u8; 32], |b| b.block_hash);
        let timestamp = transactions.iter().map(|t| t.timestamp).max().expect("non-empty batch");
        let validator_id = self.validators[(height % self.validators.len() as u64) as usize].clone();
        let header = header_bytes(height, &prev_hash, &timestamp, &validator_id, &transactions);
        let key = &self.registry[&validator_id].signing_key;
        let validator_signature = self.scheme.sign(key, &sha256(&header));
        let block_hash = block_hash(&header, &validator_signature);
        for (i, tx) in transactions.iter().enumerate() {
            self.state.mark_chained(&tx.transaction_id);
            let payload = BTreeMap::from([
                ("height".to_string(), height.to_string()),
                ("index".to_string(), i.to_string()),
            ]);
            self.emit(EventKind::TransactionVerified, &tx.transaction_id, timestamp, payload);
        }
        self.blocks.push(Block {
            height,
            prev_hash,
            timestamp,
            validator_id,
            transactions,
            block_hash,
            validator_signature,
        });
        Ok(self.blocks.last().expect("just pushed"))
    }

    /// Moves tokens for every complete settlement group without an open hold.
    pub fn finalize_unheld(&mut self) -> usize {
        self.finalize_marks.push(self.events.len() as u64);
        self.state.finalize_unheld()
    }

    /// Appends a block, shows its events to `listener`, then settles.
    pub fn commit_block_with(&mut self, listener: &mut dyn EventListener) -> Result<u64, LedgerError> {
        let from = self.events.len();
        let height = self.append_block()?.height;
        let mut i = from;
        while i < self.events.len() {
            let ev = self.events[i].clone();
            listener.on_event(self, &ev);
            i += 1;
        }
        self.finalize_unheld();
        Ok(height)
    }

    pub fn commit_block(&mut self) -> Result<u64, LedgerError> {
        self.commit_block_with(&mut |_: &mut Ledger, _: &LedgerEvent| {})
    }

    /// Commits blocks until nothing is pending.
    pub fn flush_with(&mut self, listener: &mut dyn EventListener) -> Result<(), LedgerError> {
        while !self.pending.is_empty() {
            self.commit_block_with(listener)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LedgerError> {
        self.flush_with(&mut |_: &mut Ledger, _: &LedgerEvent| {})
    }

    /// Suspends settlement of a sealed, unsettled transaction.
    pub fn hold(&mut self, tx_id: &str, at: Timestamp, reason: &str) -> Result<(), LedgerError> {
        self.state.place_hold(tx_id).map_err(|e| LedgerError::from_hold(e, tx_id))?;
        let payload = BTreeMap::from([("reason".to_string(), reason.to_string())]);
        self.emit(EventKind::TransactionHeld, tx_id, at, payload);
        Ok(())
    }

    /// Lifts a hold. Returns whether the settlement completed as a result.
    pub fn release(&mut self, tx_id: &str, at: Timestamp) -> Result<bool, LedgerError> {
        let settled = self.state.release_hold(tx_id).map_err(|e| LedgerError::from_hold(e, tx_id))?;
        self.emit(EventKind::TransactionReleased, tx_id, at, BTreeMap::new());
        Ok(settled)
    }

    /// Rejects a held transaction: its whole settlement group is reverted
    /// (escrow returned) and marked `Failed`. Other held legs of the group
    /// are rejected with it.
    pub fn reject(&mut self, tx_id: &str, at: Timestamp) -> Result<(), LedgerError> {
        let also = self.state.reject_hold(tx_id).map_err(|e| LedgerError::from_hold(e, tx_id))?;
        self.emit(EventKind::TransactionRejected, tx_id, at, BTreeMap::new());
        for leg in also {
            let payload = BTreeMap::from([("cause".to_string(), tx_id.to_string())]);
            self.emit(EventKind::TransactionRejected, &leg, at, payload);
        }
        Ok(())
    }

    fn emit(&mut self, kind: EventKind, tx_id: &str, at: Timestamp, payload: BTreeMap<String, String>) {
        self.events.push(LedgerEvent {
            seq: self.events.len() as u64,
            kind,
            transaction_id: tx_id.to_string(),
            emitted_at: at,
            payload,
        });
    }

    /// Verifies every block (hash, link, schedule position, validator
    /// signature), then replays the chain and event log from genesis and
    /// compares the result with the live state.
    pub fn validate_chain(&self) -> Result<(), ChainFault> {
        let fault = |height: u64, reason: String| ChainFault { height, reason };
        let n_val = self.validators.len() as u64;
        let mut prev = [0u8; 32];
        for (i, b) in self.blocks.iter().enumerate() {
            let h = i as u64;
            if b.height != h {
                return Err(fault(h, format!("height field {}", b.height)));
            }
            if b.prev_hash != prev {
                return Err(fault(h, "prev_hash does not link to predecessor".into()));
            }
            if n_val == 0 || b.validator_id != self.validators[(h % n_val) as usize] {
                return Err(fault(h, "validator out of schedule".into()));
            }
            let header = b.header_bytes();
            let key = &self.registry[&b.validator_id].signing_key;
            if !self.scheme.verify(key, &sha256(&header), &b.validator_signature) {
                return Err(fault(h, "bad validator signature".into()));
            }
            if block_hash(&header, &b.validator_signature) != b.block_hash {
                return Err(fault(h, "block hash mismatch".into()));
            }
            if b.transactions.is_empty() {
                return Err(fault(h, "empty block".into()));
            }
            if b.transactions.iter().map(|t| t.timestamp).max() != Some(b.timestamp) {
                return Err(fault(h, "block timestamp is not the latest record time".into()));
            }
            prev = b.block_hash;
        }
        self.replay()
    }

    fn replay(&self) -> Result<(), ChainFault> {
        let last = self.blocks.len().saturating_sub(1) as u64;
        let fault = |height: u64, reason: String| Err(ChainFault { height, reason });
        let mut st = State::genesis(self.registry.values().cloned());
        let flat: Vec<(u64, &TransactionRecord)> = self
            .blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(move |t| (b.height, t)))
            .collect();
        let mut cursor = 0usize;
        let mut marks = self.finalize_marks.iter().peekable();
        for (i, ev) in self.events.iter().enumerate() {
            while marks.peek().is_some_and(|&&m| m == i as u64) {
                st.finalize_unheld();
                marks.next();
            }
            let height_now = flat.get(cursor.saturating_sub(1)).map_or(0, |(h, _)| *h);
            if ev.seq != i as u64 {
                return fault(height_now, format!("event {i} has seq {}", ev.seq));
            }
            match ev.kind {
                EventKind::TransactionVerified => {
                    let Some(&(h, tx)) = flat.get(cursor) else {
                        return fault(last, format!("event {i} verifies a transaction beyond the chain"));
                    };
                    if tx.transaction_id != ev.transaction_id {
                        return fault(h, format!("event {i} out of step with chain order"));
                    }
                    let verdict = st.check(tx, self.scheme.as_ref(), &self.config.price_band);
                    if let Verdict::Reject(r) = verdict {
                        return fault(h, format!("transaction {} fails verification: {r}", tx.transaction_id));
                    }
                    st.accept(tx);
                    st.mark_chained(&tx.transaction_id);
                    cursor += 1;
                }
                EventKind::TransactionHeld => {
                    if st.place_hold(&ev.transaction_id).is_err() {
                        return fault(height_now, format!("event {i} holds an unholdable transaction"));
                    }
                }
                EventKind::TransactionReleased => {
                    if st.release_hold(&ev.transaction_id).is_err() {
                        return fault(height_now, format!("event {i} releases without a hold"));
                    }
                }
                EventKind::TransactionRejected => {
                    let reverted = st
                        .group_of(&ev.transaction_id)
                        .is_some_and(|(_, g)| g.outcome == Outcome::Reverted);
                    if !reverted && st.reject_hold(&ev.transaction_id).is_err() {
                        return fault(height_now, format!("event {i} rejects without a hold"));
                    }
                }
            }
        }
        for &m in marks {
            if m != self.events.len() as u64 {
                return fault(last, "finalization marks out of order".into());
            }
            st.finalize_unheld();
        }
        if cursor != flat.len() {
            return fault(flat[cursor].0, "transaction without a TransactionVerified event".into());
        }
        for tx in &self.pending {
            if !st.check(tx, self.scheme.as_ref(), &self.config.price_band).is_accept() {
                return fault(last, format!("pending {} fails verification", tx.transaction_id));
            }
            st.accept(tx);
        }
        if let Some(what) = st.first_difference(&self.state) {
            return fault(last, format!("replayed state differs from live state in {what}"));
        }
        Ok(())
    }

    /// Writes the chain, events, header, account registry and state snapshot
    /// into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), PersistError> {
        std::fs::create_dir_all(dir)?;
        chain::write_chain(BufWriter::new(File::create(dir.join(CHAIN_FILE))?), &self.blocks)?;
        chain::write_events(BufWriter::new(File::create(dir.join(EVENTS_FILE))?), &self.events)?;
        let header = ChainHeader {
            hash_function: HASH_NAME.to_string(),
            signature_scheme: self.scheme.name().to_string(),
            validators: self.validators.clone(),
            block_size: self.config.block_size,
        };
        write_json(&dir.join(HEADER_FILE), &header)?;
        let registry: Vec<&Account> = self.registry.values().collect();
        write_json(&dir.join(ACCOUNTS_FILE), &registry)?;
        let snapshot = Snapshot {
            config: self.config,
            state: self.state.clone(),
            pending: self.pending.clone(),
            finalize_marks: self.finalize_marks.clone(),
        };
        write_json(&dir.join(STATE_FILE), &snapshot)
    }

    /// Loads a ledger written by [`Ledger::save`] with the default scheme.
    pub fn load(dir: &Path) -> Result<Self, PersistError> {
        Self::load_with_scheme(dir, Arc::new(KeyedHash))
    }

    pub fn load_with_scheme(dir: &Path, scheme: Arc<dyn SignatureScheme>) -> Result<Self, PersistError> {
        let header: ChainHeader = read_json(&dir.join(HEADER_FILE))?;
        if header.hash_function != HASH_NAME {
            return Err(PersistError::Unsupported {
                what: "hash function",
                found: header.hash_function,
            });
        }
        if header.signature_scheme != scheme.name() {
            return Err(PersistError::Unsupported {
                what: "signature scheme",
                found: header.signature_scheme,
            });
        }
        let registry: Vec<Account> = read_json(&dir.join(ACCOUNTS_FILE))?;
        let snapshot: Snapshot = read_json(&dir.join(STATE_FILE))?;
        if snapshot.config.block_size != header.block_size {
            return Err(PersistError::Invalid("block size disagrees with chain header".into()));
        }
        let mut ledger = Ledger::with_scheme(snapshot.config, scheme, registry, header.validators)
            .map_err(|e| PersistError::Invalid(e.to_string()))?;
        ledger.blocks = chain::read_chain(BufReader::new(File::open(dir.join(CHAIN_FILE))?))?;
        ledger.events = chain::read_events(BufReader::new(File::open(dir.join(EVENTS_FILE))?))?;
        ledger.pending = snapshot.pending;
        ledger.finalize_marks = snapshot.finalize_marks;
        ledger.state = snapshot.state;
        let records: Vec<TransactionRecord> =
            ledger.chain_transactions().chain(ledger.pending.iter()).cloned().collect();
        ledger.state.reindex(&records);
        Ok(ledger)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PersistError::Io(e.into()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PersistError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| PersistError::Json { line: 0, source })
}
