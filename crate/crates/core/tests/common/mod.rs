#![allow(dead_code)]

use std::collections::BTreeMap;

use gridledger_core::ledger::{
    Account, AccountId, LedgerConfig, LegAttributes, Ledger, RecordTerms, Role, TransactionRecord, TxType,
    Verdict,
};
use gridledger_core::time::{from_unix, Timestamp};
use gridledger_core::{Money, Mwh};

pub const T0: i64 = 1_739_527_200; // 2025-02-14T10:00:00Z

pub fn ts(offset: i64) -> Timestamp {
    from_unix(T0 + offset)
}

pub fn id(s: &str) -> AccountId {
    AccountId::from(s)
}

pub fn mwh(s: &str) -> Mwh {
    s.parse().unwrap()
}

pub fn money(s: &str) -> Money {
    s.parse().unwrap()
}

pub fn account(name: &str, role: Role) -> Account {
    Account::new(id(name), role, format!("key-{name}").into_bytes(), format!("10.0.0.{}", name.len()), mwh("100.000"))
}

/// A small market with three authorities, three suppliers, two dealers and a
/// consumer, plus helpers that track nonces and time.
pub struct Fixture {
    pub ledger: Ledger,
    pub clock: i64,
    pub seq: u64,
}

pub fn standard_accounts() -> Vec<Account> {
    vec![
        account("auth-a", Role::Authority),
        account("auth-b", Role::Authority),
        account("auth-c", Role::Authority),
        account("sup-1", Role::Supplier),
        account("sup-2", Role::Supplier),
        account("sup-3", Role::Supplier),
        account("dealer-1", Role::Dealer),
        account("dealer-2", Role::Dealer),
        account("cons-1", Role::Consumer),
    ]
}

impl Fixture {
    pub fn new(block_size: usize) -> Self {
        let config = LedgerConfig { block_size, ..LedgerConfig::default() };
        let ledger = Ledger::new(config, standard_accounts(), vec![id("auth-a"), id("auth-b"), id("auth-c")]).unwrap();
        Fixture { ledger, clock: 0, seq: 0 }
    }

    pub fn tick(&mut self) -> Timestamp {
        self.clock += 1;
        ts(self.clock)
    }

    fn next_id(&mut self, prefix: &str) -> String {
        self.seq += 1;
        format!("{prefix}-{:05}", self.seq)
    }

    pub fn acct(&self, name: &str) -> Account {
        self.ledger.registry().find(|a| a.account_id.as_str() == name).unwrap().clone()
    }

    pub fn nonce(&self, name: &str) -> u64 {
        self.ledger.account(&id(name)).unwrap().nonce
    }

    pub fn tokens(&self, name: &str) -> Mwh {
        self.ledger.account(&id(name)).unwrap().energy_tokens
    }

    /// Signed record with the account's next nonce.
    pub fn record(
        &mut self,
        from: &str,
        ty: TxType,
        q: Mwh,
        price: Money,
        counterparty: Option<&str>,
        settlement: Option<String>,
    ) -> TransactionRecord {
        let acct = self.acct(from);
        let terms = RecordTerms {
            transaction_id: self.next_id("tx"),
            timestamp: self.tick(),
            transaction_type: ty,
            quantity: q,
            price,
            nonce: self.nonce(from) + 1,
            counterparty_id: counterparty.map(id),
            settlement_id: settlement,
        };
        let mut tx = TransactionRecord::draft(&acct, terms, &LegAttributes::default());
        self.ledger.sign_record(&mut tx, &acct.signing_key);
        tx
    }

    pub fn mint(&mut self, auth: &str, to: &str, q: Mwh) -> Verdict {
        let tx = self.record(auth, TxType::Unknown, q, money("0.00"), Some(to), None);
        self.ledger.submit(tx)
    }

    /// Submits both legs of a trade atomically. Returns `(verdict, sell_id, buy_id)`.
    pub fn trade(&mut self, seller: &str, buyer: &str, q: Mwh, price: Money) -> (Verdict, String, String) {
        let stl = self.next_id("stl");
        let sell = self.record(seller, TxType::Sell, q, price, Some(buyer), Some(stl.clone()));
        let mut buy = self.record(buyer, TxType::Buy, q, price, Some(seller), Some(stl));
        // Both legs share the settlement timestamp.
        buy.timestamp = sell.timestamp;
        let key = self.acct(buyer).signing_key;
        self.ledger.sign_record(&mut buy, &key);
        let ids = (sell.transaction_id.clone(), buy.transaction_id.clone());
        (self.ledger.submit_all(vec![sell, buy]), ids.0, ids.1)
    }
}

/// Independent replay of a hold-free chain: token balances and per-account
/// nonce sequences computed straight from the records.
pub fn oracle_balances(chain: &[TransactionRecord]) -> (BTreeMap<AccountId, Mwh>, BTreeMap<AccountId, Vec<u64>>) {
    let mut bal: BTreeMap<AccountId, Mwh> = BTreeMap::new();
    let mut nonces: BTreeMap<AccountId, Vec<u64>> = BTreeMap::new();
    for tx in chain {
        nonces.entry(tx.account_id.clone()).or_default().push(tx.nonce);
        let q = tx.electricity_quantity;
        match tx.transaction_type {
            TxType::Unknown => {
                *bal.entry(tx.counterparty_id.clone().unwrap()).or_default() += q;
            }
            TxType::Sell => {
                *bal.entry(tx.account_id.clone()).or_default() -= q;
                *bal.entry(tx.counterparty_id.clone().unwrap()).or_default() += q;
            }
            TxType::Buy => {}
        }
    }
    (bal, nonces)
}

/// Random workload of mints and trades (some infeasible) driven by a simple
/// LCG so this helper shares no code with the library's RNG streams.
pub fn random_workload(fx: &mut Fixture, target_accepted: usize, seed: u64) {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move |n: u64| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) % n
    };
    let traders = ["sup-1", "sup-2", "sup-3", "dealer-1", "dealer-2", "cons-1"];
    let auths = ["auth-a", "auth-b", "auth-c"];
    let mut accepted = 0;
    while accepted < target_accepted {
        let q = Mwh::from_raw(1 + next(20_000) as i64);
        if next(3) == 0 {
            let to = traders[next(traders.len() as u64) as usize];
            if fx.mint(auths[next(3) as usize], to, q).is_accept() {
                accepted += 1;
            }
        } else {
            let s = traders[next(traders.len() as u64) as usize];
            let mut b = traders[next(traders.len() as u64) as usize];
            if b == s {
                b = if s == "cons-1" { "sup-1" } else { "cons-1" };
            }
            let price = Money::from_raw(3000 + next(1000) as i64);
            if fx.trade(s, b, q, price).0.is_accept() {
                accepted += 2;
            }
        }
        if fx.ledger.block_due() {
            fx.ledger.commit_block().unwrap();
        }
    }
    fx.ledger.flush().unwrap();
}
