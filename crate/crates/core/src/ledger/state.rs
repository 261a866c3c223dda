//! Account state and the settlement state machine shared by live operation
//! and chain replay.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::fixed::Mwh;

use super::codec::canonical_bytes;
use super::crypto::SignatureScheme;
use super::types::{
    Account, AccountId, PriceBand, RejectReason, Role, TransactionRecord, TxStatus, TxType, Verdict,
};

/// Token movement a record causes once its settlement group finalizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub tx_id: String,
    /// Debited account; `None` for generation credits.
    pub from: Option<AccountId>,
    pub to: Option<AccountId>,
    pub quantity: Mwh,
}

labeled_enum! {
    pub enum Outcome {
        Open => "Open",
        Settled => "Settled",
        Reverted => "Reverted",
    }
}

/// Records that settle together (both legs of a trade, or a lone record).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    /// Legs the group needs before it can settle: two for a trade that
    /// carries a settlement id, one otherwise.
    pub expected: usize,
    pub legs: Vec<String>,
    /// How many legs have been sealed into blocks.
    pub chained: usize,
    pub effects: Vec<Effect>,
    pub outcome: Outcome,
}

/// Mutable ledger state. Everything here is reproducible from the registry,
/// the chain, the event log and the finalization marks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub accounts: BTreeMap<AccountId, Account>,
    pub groups: BTreeMap<String, Group>,
    /// Group keys that are neither settled nor reverted.
    pub open: BTreeSet<String>,
    pub holds: BTreeSet<String>,
    /// Transactions whose effective status differs from the recorded one.
    pub status_override: BTreeMap<String, TxStatus>,
    #[serde(skip)]
    pub(crate) ids: HashSet<String>,
    #[serde(skip)]
    pub(crate) tx_group: BTreeMap<String, String>,
}

/// Undo record for one accepted transaction.
pub(crate) struct Undo {
    tx_id: String,
    account: Account,
    group_key: String,
    group: Option<Group>,
    was_open: bool,
}

impl State {
    pub fn genesis(registry: impl IntoIterator<Item = Account>) -> Self {
        State {
            accounts: registry.into_iter().map(|a| (a.account_id.clone(), a.fresh())).collect(),
            ..State::default()
        }
    }

    /// Rebuilds the lookup tables that are not serialized.
    pub(crate) fn reindex<'a>(&mut self, records: impl IntoIterator<Item = &'a TransactionRecord>) {
        self.ids.clear();
        self.tx_group.clear();
        for tx in records {
            self.ids.insert(tx.transaction_id.clone());
            self.tx_group.insert(tx.transaction_id.clone(), tx.group_key().to_string());
        }
    }

    pub fn check(&self, tx: &TransactionRecord, scheme: &dyn SignatureScheme, band: &PriceBand) -> Verdict {
        use RejectReason::*;
        let Some(acct) = self.accounts.get(&tx.account_id) else {
            return Verdict::Reject(InvalidSignature);
        };
        if !scheme.verify(&acct.signing_key, &canonical_bytes(tx), &tx.signature) {
            return Verdict::Reject(InvalidSignature);
        }
        if !tx.electricity_quantity.is_positive() {
            return Verdict::Reject(NonPositiveQuantity);
        }
        if !band.contains(tx.price_per_mwh) {
            return Verdict::Reject(PriceOutOfBand);
        }
        if acct.last_timestamp.is_some_and(|last| tx.timestamp < last) {
            return Verdict::Reject(StaleTimestamp);
        }
        if acct.nonce.checked_add(1) != Some(tx.nonce) {
            return Verdict::Reject(NonceReplay);
        }
        if tx.transaction_type == TxType::Sell && acct.available() < tx.electricity_quantity {
            return Verdict::Reject(InsufficientBalance);
        }
        let role_ok = tx.user_role == acct.role
            && match tx.transaction_type {
                TxType::Unknown => acct.role == Role::Authority,
                TxType::Buy | TxType::Sell => acct.role != Role::Authority,
            };
        if !role_ok {
            return Verdict::Reject(RoleNotPermitted);
        }
        let needs_counterparty = tx.transaction_type != TxType::Buy;
        match &tx.counterparty_id {
            Some(cp) if !self.accounts.contains_key(cp) => return Verdict::Reject(UnknownCounterparty),
            None if needs_counterparty => return Verdict::Reject(UnknownCounterparty),
            _ => {}
        }
        if self.ids.contains(&tx.transaction_id) {
            return Verdict::Reject(DuplicateTransactionId);
        }
        Verdict::Accept
    }

    /// Applies an accepted record: nonce, timestamp, escrow and group
    /// membership. Tokens move later, when the group finalizes.
    pub(crate) fn accept(&mut self, tx: &TransactionRecord) -> Undo {
        let acct = self.accounts.get_mut(&tx.account_id).expect("checked account");
        let saved = acct.clone();
        acct.nonce = tx.nonce;
        acct.last_timestamp = Some(tx.timestamp);
        if tx.transaction_type == TxType::Sell {
            acct.escrow += tx.electricity_quantity;
        }
        let key = tx.group_key().to_string();
        let group_before = self.groups.get(&key).cloned();
        let was_open = self.open.contains(&key);
        let effect = match tx.transaction_type {
            TxType::Sell => Some(Effect {
                tx_id: tx.transaction_id.clone(),
                from: Some(tx.account_id.clone()),
                to: tx.counterparty_id.clone(),
                quantity: tx.electricity_quantity,
            }),
            TxType::Unknown => Some(Effect {
                tx_id: tx.transaction_id.clone(),
                from: None,
                to: tx.counterparty_id.clone(),
                quantity: tx.electricity_quantity,
            }),
            TxType::Buy => None,
        };
        let expected = if tx.settlement_id.is_some() { 2 } else { 1 };
        let group = self.groups.entry(key.clone()).or_insert_with(|| Group {
            expected,
            legs: Vec::new(),
            chained: 0,
            effects: Vec::new(),
            outcome: Outcome::Open,
        });
        group.legs.push(tx.transaction_id.clone());
        group.effects.extend(effect);
        self.open.insert(key.clone());
        self.ids.insert(tx.transaction_id.clone());
        self.tx_group.insert(tx.transaction_id.clone(), key.clone());
        Undo {
            tx_id: tx.transaction_id.clone(),
            account: saved,
            group_key: key,
            group: group_before,
            was_open,
        }
    }

    pub(crate) fn undo(&mut self, u: Undo) {
        self.accounts.insert(u.account.account_id.clone(), u.account);
        match u.group {
            Some(g) => {
                self.groups.insert(u.group_key.clone(), g);
            }
            None => {
                self.groups.remove(&u.group_key);
            }
        }
        if !u.was_open {
            self.open.remove(&u.group_key);
        }
        self.ids.remove(&u.tx_id);
        self.tx_group.remove(&u.tx_id);
    }

    pub(crate) fn mark_chained(&mut self, tx_id: &str) {
        let key = &self.tx_group[tx_id];
        self.groups.get_mut(key).expect("group of accepted tx").chained += 1;
    }

    pub fn group_of(&self, tx_id: &str) -> Option<(&str, &Group)> {
        let key = self.tx_group.get(tx_id)?;
        Some((key.as_str(), &self.groups[key]))
    }

    fn finalizable(&self, key: &str) -> bool {
        let g = &self.groups[key];
        g.outcome == Outcome::Open
            && g.legs.len() == g.expected
            && g.chained == g.expected
            && g.legs.iter().all(|l| !self.holds.contains(l))
    }

    fn settle(&mut self, key: &str) {
        let g = self.groups.get_mut(key).expect("group");
        g.outcome = Outcome::Settled;
        for e in g.effects.clone() {
            if let Some(from) = &e.from {
                let a = self.accounts.get_mut(from).expect("debited account");
                a.escrow -= e.quantity;
                a.energy_tokens -= e.quantity;
            }
            if let Some(to) = &e.to {
                self.accounts.get_mut(to).expect("credited account").energy_tokens += e.quantity;
            }
        }
        self.open.remove(key);
    }

    /// Settles every complete group without an open hold.
    pub fn finalize_unheld(&mut self) -> usize {
        let ready: Vec<String> = self.open.iter().filter(|k| self.finalizable(k)).cloned().collect();
        for k in &ready {
            self.settle(k);
        }
        ready.len()
    }

    pub(crate) fn place_hold(&mut self, tx_id: &str) -> Result<(), HoldError> {
        let (key, group) = self.group_of(tx_id).ok_or(HoldError::UnknownTransaction)?;
        if group.outcome != Outcome::Open {
            return Err(HoldError::AlreadyFinalized);
        }
        let key = key.to_string();
        if !self.is_chained(&key, tx_id) {
            return Err(HoldError::UnknownTransaction);
        }
        if !self.holds.insert(tx_id.to_string()) {
            return Err(HoldError::AlreadyHeld);
        }
        Ok(())
    }

    fn is_chained(&self, key: &str, tx_id: &str) -> bool {
        let g = &self.groups[key];
        g.legs.iter().position(|l| l == tx_id).is_some_and(|i| i < g.chained)
    }

    /// Lifts a hold; settles the group if nothing else blocks it.
    pub(crate) fn release_hold(&mut self, tx_id: &str) -> Result<bool, HoldError> {
        if !self.holds.remove(tx_id) {
            return Err(self.no_hold_error(tx_id));
        }
        let key = self.tx_group[tx_id].clone();
        if self.finalizable(&key) {
            self.settle(&key);
            return Ok(true);
        }
        Ok(false)
    }

    /// Reverts the whole group of `tx_id`. Returns other legs whose holds were
    /// closed as a consequence.
    pub(crate) fn reject_hold(&mut self, tx_id: &str) -> Result<Vec<String>, HoldError> {
        if !self.holds.remove(tx_id) {
            return Err(self.no_hold_error(tx_id));
        }
        let key = self.tx_group[tx_id].clone();
        let g = self.groups.get_mut(&key).expect("group");
        g.outcome = Outcome::Reverted;
        let legs = g.legs.clone();
        for e in g.effects.clone() {
            if let Some(from) = &e.from {
                self.accounts.get_mut(from).expect("debited account").escrow -= e.quantity;
            }
        }
        self.open.remove(&key);
        let mut also = Vec::new();
        for leg in legs {
            self.status_override.insert(leg.clone(), TxStatus::Failed);
            if self.holds.remove(&leg) {
                also.push(leg);
            }
        }
        Ok(also)
    }

    fn no_hold_error(&self, tx_id: &str) -> HoldError {
        match self.group_of(tx_id) {
            None => HoldError::UnknownTransaction,
            Some((_, g)) if g.outcome != Outcome::Open => HoldError::AlreadyFinalized,
            Some(_) => HoldError::NoOpenHold,
        }
    }

    /// Names the first part of `self` that differs from `other`.
    pub fn first_difference(&self, other: &State) -> Option<String> {
        if let Some((id, _)) = self.accounts.iter().find(|(id, a)| other.accounts.get(*id) != Some(a)) {
            return Some(format!("account {id}"));
        }
        let part = if self.accounts.len() != other.accounts.len() {
            "account set"
        } else if self.groups != other.groups {
            "settlement groups"
        } else if self.open != other.open {
            "open groups"
        } else if self.holds != other.holds {
            "holds"
        } else if self.status_override != other.status_override {
            "status overrides"
        } else if self.ids != other.ids || self.tx_group != other.tx_group {
            "transaction index"
        } else {
            return None;
        };
        Some(part.to_string())
    }

    pub fn total_tokens(&self) -> Mwh {
        self.accounts.values().map(|a| a.energy_tokens).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum HoldError {
    UnknownTransaction,
    AlreadyFinalized,
    AlreadyHeld,
    NoOpenHold,
}
