//! A small hand-driven market for the ledger criteria.

use std::collections::BTreeMap;

use gridledger_core::ledger::{
    Account, AccountId, LedgerConfig, LegAttributes, Ledger, RecordTerms, Role, TransactionRecord, TxType,
    Verdict,
};
use gridledger_core::time::{from_unix, Timestamp};
use gridledger_core::{Money, Mwh};

const T0: i64 = 1_739_527_200;

pub fn ts(offset: i64) -> Timestamp {
    from_unix(T0 + offset)
}

pub fn id(s: &str) -> AccountId {
    AccountId::from(s)
}

/// Deterministic generator independent of the library's RNG streams.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 33) % n
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.below(1 << 30) as f64 / (1u64 << 30) as f64
    }
}

fn account(name: &str, role: Role) -> Account {
    Account::new(id(name), role, format!("key-{name}").into_bytes(), format!("10.0.0.{}", name.len()), "100.000".parse().unwrap())
}

pub struct Fixture {
    pub ledger: Ledger,
    clock: i64,
    seq: u64,
}

pub const TRADERS: [&str; 6] = ["sup-1", "sup-2", "sup-3", "dealer-1", "dealer-2", "cons-1"];
pub const AUTHORITIES: [&str; 3] = ["auth-a", "auth-b", "auth-c"];

impl Fixture {
    pub fn new(block_size: usize) -> Self {
        let mut accounts: Vec<Account> = AUTHORITIES.iter().map(|a| account(a, Role::Authority)).collect();
        for t in TRADERS {
            let role = match t.split('-').next() {
                Some("sup") => Role::Supplier,
                Some("dealer") => Role::Dealer,
                _ => Role::Consumer,
            };
            accounts.push(account(t, role));
        }
        let config = LedgerConfig {
            block_size,
            ..LedgerConfig::default()
        };
        let ledger = Ledger::new(config, accounts, AUTHORITIES.iter().map(|a| id(a)).collect()).unwrap();
        Fixture { ledger, clock: 0, seq: 0 }
    }

    pub fn acct(&self, name: &str) -> Account {
        self.ledger.registry().find(|a| a.account_id.as_str() == name).unwrap().clone()
    }

    fn record(&mut self, from: &str, ty: TxType, q: Mwh, price: Money, to: &str, settlement: Option<String>) -> TransactionRecord {
        let acct = self.acct(from);
        self.clock += 1;
        self.seq += 1;
        let terms = RecordTerms {
            transaction_id: format!("tx-{:05}", self.seq),
            timestamp: ts(self.clock),
            transaction_type: ty,
            quantity: q,
            price,
            nonce: self.ledger.account(&id(from)).unwrap().nonce + 1,
            counterparty_id: Some(id(to)),
            settlement_id: settlement,
        };
        let mut tx = TransactionRecord::draft(&acct, terms, &LegAttributes::default());
        self.ledger.sign_record(&mut tx, &acct.signing_key);
        tx
    }

    pub fn mint(&mut self, auth: &str, to: &str, q: Mwh) -> Verdict {
        let tx = self.record(auth, TxType::Unknown, q, Money::from_raw(0), to, None);
        self.ledger.submit(tx)
    }

    pub fn trade(&mut self, seller: &str, buyer: &str, q: Mwh, price: Money) -> Verdict {
        self.seq += 1;
        let stl = format!("stl-{:05}", self.seq);
        let sell = self.record(seller, TxType::Sell, q, price, buyer, Some(stl.clone()));
        let mut buy = self.record(buyer, TxType::Buy, q, price, seller, Some(stl));
        buy.timestamp = sell.timestamp;
        let key = self.acct(buyer).signing_key;
        self.ledger.sign_record(&mut buy, &key);
        self.ledger.submit_all(vec![sell, buy])
    }
}

/// Mints and trades, some infeasible, until `target` records are accepted.
/// When `each_block` is given it runs after every committed block.
pub fn random_workload(fx: &mut Fixture, target: usize, seed: u64, each_block: &mut dyn FnMut(&Ledger, Mwh)) {
    let mut rng = Lcg::new(seed);
    let mut accepted = 0;
    while accepted < target {
        let q = Mwh::from_raw(1 + rng.below(20_000) as i64);
        if rng.below(3) == 0 {
            let to = TRADERS[rng.below(6) as usize];
            if fx.mint(AUTHORITIES[rng.below(3) as usize], to, q).is_accept() {
                accepted += 1;
            }
        } else {
            let s = TRADERS[rng.below(6) as usize];
            let mut b = TRADERS[rng.below(6) as usize];
            if b == s {
                b = if s == "cons-1" { "sup-1" } else { "cons-1" };
            }
            if fx.trade(s, b, q, Money::from_raw(3000 + rng.below(1000) as i64)).is_accept() {
                accepted += 2;
            }
        }
        if fx.ledger.block_due() {
            let size = fx.ledger.config().block_size;
            let mints: Mwh = fx.ledger.pending()[..size]
                .iter()
                .filter(|t| t.transaction_type == TxType::Unknown)
                .map(|t| t.electricity_quantity)
                .sum();
            fx.ledger.commit_block().unwrap();
            each_block(&fx.ledger, mints);
        }
    }
    fx.ledger.flush().unwrap();
}

/// Balances and per-account nonce sequences recomputed from the records.
pub fn oracle_balances(chain: &[TransactionRecord]) -> (BTreeMap<AccountId, Mwh>, BTreeMap<AccountId, Vec<u64>>) {
    let mut bal: BTreeMap<AccountId, Mwh> = BTreeMap::new();
    let mut nonces: BTreeMap<AccountId, Vec<u64>> = BTreeMap::new();
    for tx in chain {
        nonces.entry(tx.account_id.clone()).or_default().push(tx.nonce);
        let q = tx.electricity_quantity;
        match tx.transaction_type {
            TxType::Unknown => *bal.entry(tx.counterparty_id.clone().unwrap()).or_default() += q,
            TxType::Sell => {
                *bal.entry(tx.account_id.clone()).or_default() -= q;
                *bal.entry(tx.counterparty_id.clone().unwrap()).or_default() += q;
            }
            TxType::Buy => {}
        }
    }
    (bal, nonces)
}
