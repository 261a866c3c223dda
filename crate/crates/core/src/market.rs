//! Continuous double auction that settles onto the ledger.
//!
//! Offers reserve the seller's unlocked tokens when posted. Matching pairs
//! the best bid with the best offer while they cross, at the midpoint of the
//! two limits; each match settles as a Sell/Buy record pair submitted to the
//! ledger atomically.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::fixed::{Money, Mwh};
use crate::ledger::{
    AccountId, Ledger, LegAttributes, RecordTerms, RejectReason, TransactionRecord, TxType, Verdict,
};
use crate::time::{serde_ts, Timestamp};

labeled_enum! {
    pub enum Side {
        Bid => "bid",
        Offer => "offer",
    }
}

labeled_enum! {
    pub enum OrderState {
        Open => "Open",
        PartiallyFilled => "PartiallyFilled",
        Filled => "Filled",
        Cancelled => "Cancelled",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: String,
    pub side: Side,
    pub account_id: AccountId,
    pub quantity_mwh: Mwh,
    pub residual: Mwh,
    pub limit_price: Money,
    #[serde(with = "serde_ts")]
    pub posted_at: Timestamp,
    pub state: OrderState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub settlement_id: String,
    pub offer_id: String,
    pub bid_id: String,
    pub seller: AccountId,
    pub buyer: AccountId,
    pub quantity_mwh: Mwh,
    pub clearing_price: Money,
    #[serde(with = "serde_ts")]
    pub matched_at: Timestamp,
    pub sell_tx_id: String,
    pub buy_tx_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MarketError {
    #[error("order quantity must be positive")]
    NonPositiveQuantity,
    #[error("account {0} has insufficient unreserved tokens")]
    InsufficientBalance(AccountId),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("order id {0} already used")]
    DuplicateOrderId(String),
    #[error("unknown order {0}")]
    UnknownOrder(String),
    #[error("order {0} is no longer open")]
    OrderClosed(String),
    #[error("ledger rejected settlement {settlement_id}: {reason}")]
    Rejected {
        settlement_id: String,
        reason: RejectReason,
    },
}

#[derive(Clone, Debug, Default)]
pub struct Market {
    orders: BTreeMap<String, Order>,
    bids: BTreeSet<(Reverse<Money>, Timestamp, String)>,
    offers: BTreeSet<(Money, Timestamp, String)>,
    reserved: BTreeMap<AccountId, Mwh>,
    next_order: u64,
    next_settlement: u64,
}

impl Market {
    pub fn new() -> Self {
        Market::default()
    }

    pub fn order(&self, order_id: &str) -> Option<&Order> {
        self.orders.get(order_id)
    }

    pub fn orders(&self) -> impl Iterator<Item = &Order> {
        self.orders.values()
    }

    /// Quantity reserved by open offers of `account`.
    pub fn reserved(&self, account: &AccountId) -> Mwh {
        self.reserved.get(account).copied().unwrap_or(Mwh::ZERO)
    }

    /// Ledger tokens neither escrowed nor reserved by open offers.
    pub fn unreserved(&self, ledger: &Ledger, account: &AccountId) -> Option<Mwh> {
        ledger.account(account).map(|a| a.available() - self.reserved(account))
    }

    pub fn best_bid(&self) -> Option<&Order> {
        self.bids.first().map(|(_, _, id)| &self.orders[id])
    }

    pub fn best_offer(&self) -> Option<&Order> {
        self.offers.first().map(|(_, _, id)| &self.orders[id])
    }

    /// Open bids in priority order.
    pub fn bid_queue(&self) -> impl Iterator<Item = &Order> {
        self.bids.iter().map(|(_, _, id)| &self.orders[id])
    }

    /// Open offers in priority order.
    pub fn offer_queue(&self) -> impl Iterator<Item = &Order> {
        self.offers.iter().map(|(_, _, id)| &self.orders[id])
    }

    fn fresh_id(&mut self, prefix: &str) -> String {
        loop {
            self.next_order += 1;
            let id = format!("{prefix}{:07}", self.next_order);
            if !self.orders.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn post_offer(
        &mut self,
        ledger: &Ledger,
        account: &AccountId,
        quantity: Mwh,
        limit_price: Money,
        time: Timestamp,
    ) -> Result<String, MarketError> {
        let id = self.fresh_id("O");
        self.post(ledger, Side::Offer, id, account, quantity, limit_price, time)
    }

    pub fn post_bid(
        &mut self,
        ledger: &Ledger,
        account: &AccountId,
        quantity: Mwh,
        limit_price: Money,
        time: Timestamp,
    ) -> Result<String, MarketError> {
        let id = self.fresh_id("B");
        self.post(ledger, Side::Bid, id, account, quantity, limit_price, time)
    }

    /// Posts an order under a caller-chosen id.
    #[allow(clippy::too_many_arguments)]
    pub fn post(
        &mut self,
        ledger: &Ledger,
        side: Side,
        order_id: String,
        account: &AccountId,
        quantity: Mwh,
        limit_price: Money,
        time: Timestamp,
    ) -> Result<String, MarketError> {
        if !quantity.is_positive() {
            return Err(MarketError::NonPositiveQuantity);
        }
        if self.orders.contains_key(&order_id) {
            return Err(MarketError::DuplicateOrderId(order_id));
        }
        let unreserved = self
            .unreserved(ledger, account)
            .ok_or_else(|| MarketError::UnknownAccount(account.clone()))?;
        match side {
            Side::Offer => {
                if unreserved < quantity {
                    return Err(MarketError::InsufficientBalance(account.clone()));
                }
                *self.reserved.entry(account.clone()).or_default() += quantity;
                self.offers.insert((limit_price, time, order_id.clone()));
            }
            Side::Bid => {
                self.bids.insert((Reverse(limit_price), time, order_id.clone()));
            }
        }
        self.orders.insert(
            order_id.clone(),
            Order {
                order_id: order_id.clone(),
                side,
                account_id: account.clone(),
                quantity_mwh: quantity,
                residual: quantity,
                limit_price,
                posted_at: time,
                state: OrderState::Open,
            },
        );
        Ok(order_id)
    }

    /// Withdraws the unfilled part of an order and frees its reservation.
    pub fn cancel(&mut self, order_id: &str) -> Result<(), MarketError> {
        let order = self
            .orders
            .get_mut(order_id)
            .ok_or_else(|| MarketError::UnknownOrder(order_id.to_string()))?;
        if matches!(order.state, OrderState::Filled | OrderState::Cancelled) {
            return Err(MarketError::OrderClosed(order_id.to_string()));
        }
        order.state = OrderState::Cancelled;
        let (side, price, time, residual, acct) =
            (order.side, order.limit_price, order.posted_at, order.residual, order.account_id.clone());
        match side {
            Side::Bid => {
                self.bids.remove(&(Reverse(price), time, order_id.to_string()));
            }
            Side::Offer => {
                self.offers.remove(&(price, time, order_id.to_string()));
                self.release(&acct, residual);
            }
        }
        Ok(())
    }

    fn release(&mut self, account: &AccountId, q: Mwh) {
        if let Some(r) = self.reserved.get_mut(account) {
            *r -= q;
            if *r == Mwh::ZERO {
                self.reserved.remove(account);
            }
        }
    }

    /// Matches crossing orders until the book no longer crosses.
    ///
    /// Matched offer quantity stays reserved until [`Market::settle`] runs.
    pub fn match_orders(&mut self, time: Timestamp) -> Vec<Settlement> {
        let mut out = Vec::new();
        loop {
            let (Some(bid_key), Some(offer_key)) = (self.bids.first().cloned(), self.offers.first().cloned()) else {
                break;
            };
            let (bid_price, offer_price) = (bid_key.0 .0, offer_key.0);
            if bid_price < offer_price {
                break;
            }
            let (bid_id, offer_id) = (bid_key.2.clone(), offer_key.2.clone());
            let q = self.orders[&bid_id].residual.min(self.orders[&offer_id].residual);
            for (id, filled) in [(&bid_id, q), (&offer_id, q)] {
                let o = self.orders.get_mut(id).expect("booked order");
                o.residual -= filled;
                o.state = if o.residual == Mwh::ZERO {
                    OrderState::Filled
                } else {
                    OrderState::PartiallyFilled
                };
            }
            if self.orders[&bid_id].residual == Mwh::ZERO {
                self.bids.remove(&bid_key);
            }
            if self.orders[&offer_id].residual == Mwh::ZERO {
                self.offers.remove(&offer_key);
            }
            self.next_settlement += 1;
            let settlement_id = format!("S{:07}", self.next_settlement);
            out.push(Settlement {
                sell_tx_id: format!("{settlement_id}-1"),
                buy_tx_id: format!("{settlement_id}-2"),
                settlement_id,
                seller: self.orders[&offer_id].account_id.clone(),
                buyer: self.orders[&bid_id].account_id.clone(),
                offer_id,
                bid_id,
                quantity_mwh: q,
                clearing_price: bid_price.midpoint(offer_price),
                matched_at: time,
            });
        }
        out
    }

    /// Builds, signs and submits the Sell and Buy legs of `s` as one atomic
    /// ledger submission. The matched reservation is released either way;
    /// on acceptance the ledger escrows the sold tokens instead.
    pub fn settle(
        &mut self,
        ledger: &mut Ledger,
        s: &Settlement,
        sell_attrs: &LegAttributes,
        buy_attrs: &LegAttributes,
    ) -> Result<(TransactionRecord, TransactionRecord), MarketError> {
        self.release(&s.seller, s.quantity_mwh);
        let (sell, buy) = build_legs(ledger, s, sell_attrs, buy_attrs)?;
        match ledger.submit_all(vec![sell.clone(), buy.clone()]) {
            Verdict::Accept => Ok((sell, buy)),
            Verdict::Reject(reason) => Err(MarketError::Rejected {
                settlement_id: s.settlement_id.clone(),
                reason,
            }),
        }
    }

    /// Matches at `time` and settles every match with default attributes.
    /// Returns each settlement with its outcome.
    pub fn match_and_settle(
        &mut self,
        ledger: &mut Ledger,
        time: Timestamp,
    ) -> Vec<(Settlement, Result<(), MarketError>)> {
        let attrs = LegAttributes::default();
        self.match_orders(time)
            .into_iter()
            .map(|s| {
                let r = self.settle(ledger, &s, &attrs, &attrs).map(|_| ());
                (s, r)
            })
            .collect()
    }
}

/// Signed Sell and Buy records for a settlement, using the accounts' next
/// nonces and registered keys.
pub fn build_legs(
    ledger: &Ledger,
    s: &Settlement,
    sell_attrs: &LegAttributes,
    buy_attrs: &LegAttributes,
) -> Result<(TransactionRecord, TransactionRecord), MarketError> {
    let leg = |acct_id: &AccountId, ty, tx_id: &str, cp: &AccountId, attrs| {
        let acct = ledger
            .account(acct_id)
            .ok_or_else(|| MarketError::UnknownAccount(acct_id.clone()))?;
        let terms = RecordTerms {
            transaction_id: tx_id.to_string(),
            timestamp: s.matched_at,
            transaction_type: ty,
            quantity: s.quantity_mwh,
            price: s.clearing_price,
            nonce: acct.nonce + 1,
            counterparty_id: Some(cp.clone()),
            settlement_id: Some(s.settlement_id.clone()),
        };
        let mut tx = TransactionRecord::draft(acct, terms, attrs);
        ledger.sign_record(&mut tx, &acct.signing_key);
        Ok::<_, MarketError>(tx)
    };
    let sell = leg(&s.seller, TxType::Sell, &s.sell_tx_id, &s.buyer, sell_attrs)?;
    let mut buy = leg(&s.buyer, TxType::Buy, &s.buy_tx_id, &s.seller, buy_attrs)?;
    if s.buyer == s.seller {
        // Same account on both sides: the buy leg follows the sell's nonce.
        buy.nonce += 1;
        let key = &ledger.account(&s.buyer).expect("checked above").signing_key;
        ledger.sign_record(&mut buy, key);
    }
    Ok((sell, buy))
}

/// One row of an order-stream CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderInstruction {
    pub order_id: String,
    pub side: Side,
    pub account_id: AccountId,
    pub quantity_mwh: Mwh,
    pub limit_price: Money,
    #[serde(with = "serde_ts")]
    pub posted_at: Timestamp,
}

pub const ORDER_CSV_HEADER: &str = "order_id,side,account_id,quantity_mwh,limit_price,posted_at";

pub fn read_orders<R: Read>(r: R) -> Result<Vec<OrderInstruction>, csv::Error> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().collect()
}

pub fn write_orders<W: std::io::Write>(w: W, orders: &[OrderInstruction]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for o in orders {
        wtr.serialize(o)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Outcome of one replayed instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayStep {
    pub order_id: String,
    pub posted: Result<(), MarketError>,
    pub settlements: Vec<(Settlement, Result<(), MarketError>)>,
}

/// Posts each instruction in order, matching and settling after each post.
pub fn replay(market: &mut Market, ledger: &mut Ledger, orders: &[OrderInstruction]) -> Vec<ReplayStep> {
    orders
        .iter()
        .map(|o| {
            let posted = market
                .post(ledger, o.side, o.order_id.clone(), &o.account_id, o.quantity_mwh, o.limit_price, o.posted_at)
                .map(|_| ());
            let settlements = if posted.is_ok() {
                market.match_and_settle(ledger, o.posted_at)
            } else {
                Vec::new()
            };
            ReplayStep {
                order_id: o.order_id.clone(),
                posted,
                settlements,
            }
        })
        .collect()
}
