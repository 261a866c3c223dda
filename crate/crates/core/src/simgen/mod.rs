//! Deterministic scenario generator.
//!
//! Agents trade through the [`Market`] and the [`Ledger`]; authorities issue
//! attested generation. A fixed share of rows is replaced by labelled fraud
//! whose tags live only in the side-channel [`GroundTruth`].

mod agents;
mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetError, DatasetRow};
use crate::fixed::{Money, Mwh};
use crate::ledger::{
    AccountId, EventListener, Ledger, LedgerConfig, LedgerError, LedgerEvent, LegAttributes, NetworkSlice,
    RecordTerms, SecurityLevel, TransactionRecord, TxStatus, TxType, Verdict,
};
use crate::market::{build_legs, Market, MarketError, Settlement};
use crate::numeric::apportion;
use crate::rng::{stream, SimRng};
use crate::time::{serde_ts, Timestamp};

pub use agents::{generate_agents, Agents};
pub use config::{ConfigError, FraudMix, HourIntensity, PriceMixture, Range, RoleMix, ScenarioConfig};

labeled_enum! {
    pub enum FraudKind {
        Spoofing => "Spoofing",
        DoubleSpend => "DoubleSpend",
        MeterInflation => "MeterInflation",
        WashTrade => "WashTrade",
        SybilBurst => "SybilBurst",
        OffPeakBurst => "OffPeakBurst",
        None => "None",
    }
}

impl FraudKind {
    pub const INJECTED: [FraudKind; 6] = [
        FraudKind::Spoofing,
        FraudKind::DoubleSpend,
        FraudKind::MeterInflation,
        FraudKind::WashTrade,
        FraudKind::SybilBurst,
        FraudKind::OffPeakBurst,
    ];

    pub fn is_fraud(self) -> bool {
        self != FraudKind::None
    }
}

/// Off-chain fraud labels, one per submitted record, in submission order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    entries: Vec<(String, FraudKind)>,
    index: BTreeMap<String, usize>,
}

impl GroundTruth {
    pub fn from_entries(entries: Vec<(String, FraudKind)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (id, _))| (id.clone(), i)).collect();
        GroundTruth { entries, index }
    }

    pub fn entries(&self) -> &[(String, FraudKind)] {
        &self.entries
    }

    pub fn kind(&self, tx_id: &str) -> Option<FraudKind> {
        self.index.get(tx_id).map(|&i| self.entries[i].1)
    }

    pub fn is_fraud(&self, tx_id: &str) -> bool {
        self.kind(tx_id).is_some_and(FraudKind::is_fraud)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tagged(&self) -> usize {
        self.entries.iter().filter(|(_, k)| k.is_fraud()).count()
    }

    fn push(&mut self, id: String, kind: FraudKind) {
        self.index.insert(id.clone(), self.entries.len());
        self.entries.push((id, kind));
    }
}

/// Hours whose intensity is below the median of the scenario's hours.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffPeakHours {
    #[serde(with = "serde_ts")]
    pub start: Timestamp,
    pub offsets: BTreeSet<u32>,
}

impl OffPeakHours {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let mut xs: Vec<f64> = config.hours.iter().map(|h| h.intensity).collect();
        xs.sort_by(f64::total_cmp);
        let m = xs.len();
        let median = if m % 2 == 1 { xs[m / 2] } else { (xs[m / 2 - 1] + xs[m / 2]) / 2.0 };
        OffPeakHours {
            start: config.start,
            offsets: config.hours.iter().filter(|h| h.intensity < median).map(|h| h.offset).collect(),
        }
    }

    pub fn contains(&self, ts: &Timestamp) -> bool {
        let secs = (*ts - self.start).num_seconds();
        secs >= 0 && u32::try_from(secs / 3600).is_ok_and(|h| self.offsets.contains(&h))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot inject {kind}: {reason}")]
    FraudRateInfeasible { kind: FraudKind, reason: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// A finished scenario: every submission, its verdict and label, and the
/// resulting chain.
pub struct SimOutput {
    pub config: ScenarioConfig,
    pub agents: Agents,
    /// Every submitted record in submission order, rejected ones included.
    pub records: Vec<TransactionRecord>,
    pub verdicts: Vec<Verdict>,
    pub truth: GroundTruth,
    pub ledger: Ledger,
    pub market: Market,
    pub off_peak: OffPeakHours,
}

impl SimOutput {
    /// Dataset rows: rejected submissions are logged as `Failed`, accepted
    /// ones with their effective status.
    pub fn rows(&self) -> Vec<DatasetRow> {
        self.records
            .iter()
            .zip(&self.verdicts)
            .map(|(tx, v)| {
                let status = if v.is_accept() { self.ledger.effective_status(tx) } else { TxStatus::Failed };
                DatasetRow::from_record(tx, status)
            })
            .collect()
    }

    pub fn export_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let f = File::create(path).map_err(csv::Error::from)?;
        dataset::write_csv(BufWriter::new(f), &self.rows())
    }

    pub fn export_truth(&self, path: &Path) -> Result<(), DatasetError> {
        let f = File::create(path).map_err(csv::Error::from)?;
        dataset::write_truth(BufWriter::new(f), self.truth.entries())
    }
}

/// Maps quantiles of the scenario's activity profile to timestamps.
struct Clock {
    start: Timestamp,
    hours: Vec<(u32, f64)>,
    cum: Vec<f64>,
    ramp: bool,
}

impl Clock {
    fn new(config: &ScenarioConfig) -> Self {
        let mut hours: Vec<(u32, f64)> = config.hours.iter().map(|h| (h.offset, h.intensity)).collect();
        hours.sort_by_key(|h| h.0);
        let total: f64 = hours.iter().map(|h| h.1).sum();
        let mut acc = 0.0;
        let cum = hours
            .iter()
            .map(|h| {
                acc += h.1 / total;
                acc
            })
            .collect();
        Clock {
            start: config.start,
            hours,
            cum,
            ramp: config.ramp_within_hour,
        }
    }

    fn in_hour(&self, offset: u32, v: f64) -> Timestamp {
        let x = if self.ramp { 1.0 - (1.0 - v).sqrt() } else { v };
        let sec = ((x * 3600.0).floor() as i64).clamp(0, 3599);
        self.start + chrono::Duration::seconds(offset as i64 * 3600 + sec)
    }

    fn at_quantile(&self, u: f64) -> Timestamp {
        let i = self.cum.partition_point(|&c| c <= u).min(self.hours.len() - 1);
        let lo = if i == 0 { 0.0 } else { self.cum[i - 1] };
        let width = self.cum[i] - lo;
        let v = if width > 0.0 { ((u - lo) / width).clamp(0.0, 1.0 - 1e-12) } else { 0.0 };
        self.in_hour(self.hours[i].0, v)
    }

    /// A time drawn from the activity profile, restricted to quantiles `>= lo`.
    fn sample(&self, rng: &mut SimRng, lo: f64) -> Timestamp {
        self.at_quantile(lo + (1.0 - lo) * rng.random::<f64>())
    }

    /// `count` sorted times with per-hour counts apportioned exactly.
    fn spread(&self, rng: &mut SimRng, count: usize) -> Vec<Timestamp> {
        let weights: Vec<f64> = self.hours.iter().map(|h| h.1).collect();
        let mut out = Vec::with_capacity(count);
        for (h, n) in self.hours.iter().zip(apportion(count, &weights)) {
            for _ in 0..n {
                out.push(self.in_hour(h.0, rng.random::<f64>()));
            }
        }
        out.sort();
        out
    }
}

#[derive(Clone, Debug)]
enum Plan {
    Issue,
    Trade,
    Spoof,
    DoubleSpend,
    MeterInflation,
    Wash { pair: usize, quantity: Mwh },
    Sybil { buyer: AccountId },
    OffPeak { buyer: AccountId },
}

struct Action {
    at: Timestamp,
    plan: Plan,
}

/// Tagged-row budget per injected kind, in [`FraudKind::INJECTED`] order.
fn fraud_budget(config: &ScenarioConfig) -> Result<[usize; 6], SimError> {
    let tagged = (config.fraud_rate * config.n_transactions as f64).round() as usize;
    let weights: Vec<f64> = FraudKind::INJECTED.iter().map(|k| config.fraud_mix.weight(*k)).collect();
    let mut counts: [usize; 6] = apportion(tagged, &weights).try_into().expect("six kinds");
    let wash = FraudKind::WashTrade.index();
    if counts[wash] % 2 == 1 {
        // Wash trades tag both legs, so their budget must be even.
        let Some(other) = (0..6).filter(|&i| i != wash && weights[i] > 0.0).max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a))) else {
            return Err(SimError::FraudRateInfeasible {
                kind: FraudKind::WashTrade,
                reason: "an odd number of tagged rows cannot be split into trade pairs".into(),
            });
        };
        counts[wash] -= 1;
        counts[other] += 1;
    }
    Ok(counts)
}

fn check_feasible(config: &ScenarioConfig, agents: &Agents, off_peak: &OffPeakHours, counts: &[usize; 6]) -> Result<(), SimError> {
    let need = |kind: FraudKind, ok: bool, reason: &str| {
        if counts[kind.index()] > 0 && !ok {
            Err(SimError::FraudRateInfeasible { kind, reason: reason.into() })
        } else {
            Ok(())
        }
    };
    need(
        FraudKind::SybilBurst,
        !agents.sybil_clusters.is_empty() && config.role_mix.sybil_cluster_size >= 5,
        "needs at least one Sybil cluster of five or more accounts",
    )?;
    need(FraudKind::OffPeakBurst, !agents.suppliers.is_empty(), "needs a supplier")?;
    need(FraudKind::OffPeakBurst, !off_peak.offsets.is_empty(), "scenario has no off-peak hours")?;
    need(FraudKind::MeterInflation, !agents.suppliers.is_empty(), "needs a supplier")?;
    need(FraudKind::WashTrade, !agents.wash_pairs.is_empty(), "needs a colluding dealer pair")?;
    Ok(())
}

fn plan_actions(
    config: &ScenarioConfig,
    agents: &Agents,
    off_peak: &OffPeakHours,
    counts: &[usize; 6],
) -> Vec<Action> {
    let mut rng = stream(config.seed, "plan");
    let clock = Clock::new(config);
    let n = config.n_transactions;
    let tagged: usize = counts.iter().sum();
    let c = |k: FraudKind| counts[k.index()];
    let honest = c(FraudKind::MeterInflation) + c(FraudKind::SybilBurst) + c(FraudKind::OffPeakBurst);
    let benign_rows = n - tagged - honest;
    let mut issues = ((config.role_mix.authority_share * n as f64).round() as usize).min(benign_rows);
    if (benign_rows - issues) % 2 == 1 {
        if issues < benign_rows {
            issues += 1;
        } else {
            issues -= 1;
        }
    }
    let trades = (benign_rows - issues) / 2;

    let mut kinds: Vec<bool> = std::iter::repeat_n(true, issues).chain(std::iter::repeat_n(false, trades)).collect();
    crate::rng::shuffle(&mut kinds, &mut rng);
    let times = clock.spread(&mut rng, benign_rows);
    let mut actions = Vec::with_capacity(issues + trades + tagged);
    let mut cursor = 0;
    for is_issue in kinds {
        actions.push(Action {
            at: times[cursor],
            plan: if is_issue { Plan::Issue } else { Plan::Trade },
        });
        cursor += if is_issue { 1 } else { 2 };
    }

    for _ in 0..c(FraudKind::Spoofing) {
        actions.push(Action { at: clock.sample(&mut rng, 0.0), plan: Plan::Spoof });
    }
    for _ in 0..c(FraudKind::DoubleSpend) {
        actions.push(Action { at: clock.sample(&mut rng, 0.05), plan: Plan::DoubleSpend });
    }
    for _ in 0..c(FraudKind::MeterInflation) {
        actions.push(Action { at: clock.sample(&mut rng, 0.25), plan: Plan::MeterInflation });
    }

    let wash_trades = c(FraudKind::WashTrade) / 2;
    let wash_bursts = wash_trades.div_ceil(8);
    for (b, size) in apportion(wash_trades, &vec![1.0; wash_bursts]).into_iter().enumerate() {
        let pair = b % agents.wash_pairs.len();
        let quantity = Mwh::from_raw(rng.random_range(500..=5000));
        let mut t = clock.sample(&mut rng, 0.25);
        for _ in 0..size {
            actions.push(Action { at: t, plan: Plan::Wash { pair, quantity } });
            t += chrono::Duration::seconds(rng.random_range(3..=30));
        }
    }

    let sybil_rows = c(FraudKind::SybilBurst);
    let sybil_bursts = if sybil_rows == 0 { 0 } else { ((sybil_rows as f64 / 12.0).round() as usize).max(1) };
    for (b, size) in apportion(sybil_rows, &vec![1.0; sybil_bursts]).into_iter().enumerate() {
        let cluster = &agents.sybil_clusters[b % agents.sybil_clusters.len()];
        let start = clock.sample(&mut rng, 0.1);
        let mut offset = 0.0f64;
        let mut members = cluster.clone();
        crate::rng::shuffle(&mut members, &mut rng);
        for k in 0..size {
            actions.push(Action {
                at: start + chrono::Duration::seconds(offset.floor() as i64),
                plan: Plan::Sybil { buyer: members[k % members.len()].clone() },
            });
            offset += rng.random::<f64>();
        }
    }

    let burst_rows = c(FraudKind::OffPeakBurst);
    if burst_rows > 0 {
        let late = clock.at_quantile(0.25);
        let mut hours: Vec<u32> = off_peak
            .offsets
            .iter()
            .copied()
            .filter(|h| config.start + chrono::Duration::hours(*h as i64 + 1) > late)
            .collect();
        if hours.is_empty() {
            hours = off_peak.offsets.iter().copied().collect();
        }
        let bursts = (burst_rows / 12).max(1);
        for size in apportion(burst_rows, &vec![1.0; bursts]) {
            let buyer = agents.suppliers[rng.random_range(0..agents.suppliers.len())].clone();
            let hour = hours[rng.random_range(0..hours.len())];
            let start = config.start + chrono::Duration::seconds(hour as i64 * 3600 + rng.random_range(0..3540));
            for k in 0..size {
                actions.push(Action {
                    at: start + chrono::Duration::seconds((k * 60 / size.max(1)) as i64),
                    plan: Plan::OffPeak { buyer: buyer.clone() },
                });
            }
        }
    }

    actions.sort_by_key(|a| a.at);
    actions
}

/// Per-leg dataset attributes.
struct Attributes {
    latency: Range,
    sybil_latency: Range,
    slice: WeightedIndex<f64>,
    security: WeightedIndex<f64>,
    status: WeightedIndex<f64>,
    encryption: Vec<String>,
    zt: f64,
}

impl Attributes {
    /// `forced_failed` rows are always logged `Failed`; the remaining rows'
    /// status weights are shifted so the overall marginal stays as configured.
    fn new(config: &ScenarioConfig, forced_failed: usize) -> Self {
        let n = config.n_transactions as f64;
        let p = config.status_probabilities;
        let sum: f64 = p.iter().sum();
        let status = [((p[0] / sum) * n - forced_failed as f64).max(0.0), (p[1] / sum) * n, (p[2] / sum) * n];
        Attributes {
            latency: config.latency_ms,
            sybil_latency: config.sybil_latency_ms,
            slice: WeightedIndex::new(config.slice_weights).expect("validated weights"),
            security: WeightedIndex::new(config.security_weights).expect("validated weights"),
            status: WeightedIndex::new(status).expect("validated weights"),
            encryption: config.encryption_methods.clone(),
            zt: config.zt_probability,
        }
    }

    fn draw(&self, rng: &mut SimRng, sybil: bool) -> LegAttributes {
        let r = if sybil { self.sybil_latency } else { self.latency };
        let latency = rng.random_range(r.min..r.max);
        LegAttributes {
            latency_ms: (latency * 1000.0).round() / 1000.0,
            security_level: SecurityLevel::ALL[self.security.sample(rng)],
            encryption_method: self.encryption[rng.random_range(0..self.encryption.len())].clone(),
            zt_authentication: rng.random_bool(self.zt),
            network_slice_id: NetworkSlice::ALL[self.slice.sample(rng)],
            transaction_status: TxStatus::ALL[self.status.sample(rng)],
        }
    }
}

struct Executor<'a> {
    config: &'a ScenarioConfig,
    agents: &'a Agents,
    listener: &'a mut dyn EventListener,
    rng: SimRng,
    attrs: Attributes,
    normal: Normal<f64>,
    ledger: Ledger,
    market: Market,
    records: Vec<TransactionRecord>,
    verdicts: Vec<Verdict>,
    truth: GroundTruth,
    accepted: Vec<usize>,
    wash_last_seller: BTreeMap<usize, AccountId>,
    next_id: u64,
    next_fallback: u64,
}

impl Executor<'_> {
    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("T{:07}", self.next_id)
    }

    fn quantity(&mut self) -> Mwh {
        let max = (self.config.quantity_max_mwh * 1000.0).round() as i64;
        Mwh::from_raw(self.rng.random_range(1..=max))
    }

    fn price(&mut self) -> Money {
        let p = &self.config.price_mixture;
        let x = if self.rng.random_bool(p.normal_weight) {
            loop {
                let x = self.normal.sample(&mut self.rng);
                if (p.normal_min..=p.normal_max).contains(&x) {
                    break x;
                }
            }
        } else {
            self.rng.random_range(p.uniform_min..p.uniform_max)
        };
        Money::from_f64(x)
    }

    fn pick<'b>(&mut self, from: &'b [AccountId]) -> &'b AccountId {
        &from[self.rng.random_range(0..from.len())]
    }

    fn unreserved(&self, id: &AccountId) -> Mwh {
        self.market.unreserved(&self.ledger, id).unwrap_or(Mwh::ZERO)
    }

    /// A uniformly chosen trader other than `exclude` that can deliver `q`.
    fn eligible_seller(&mut self, exclude: &AccountId, q: Mwh) -> Option<AccountId> {
        let eligible: Vec<&AccountId> =
            self.agents.traders.iter().filter(|t| *t != exclude && self.unreserved(t) >= q).collect();
        if eligible.is_empty() {
            return None;
        }
        Some(eligible[self.rng.random_range(0..eligible.len())].clone())
    }

    fn richest(&self, among: &[AccountId], exclude: &AccountId) -> AccountId {
        among
            .iter()
            .filter(|t| *t != exclude)
            .max_by(|a, b| self.unreserved(a).cmp(&self.unreserved(b)).then(b.cmp(a)))
            .expect("at least two traders")
            .clone()
    }

    fn log(&mut self, tx: TransactionRecord, verdict: Verdict, kind: FraudKind) {
        if verdict.is_accept() {
            self.accepted.push(self.records.len());
        }
        self.truth.push(tx.transaction_id.clone(), kind);
        self.records.push(tx);
        self.verdicts.push(verdict);
    }

    fn seal_due(&mut self) -> Result<(), SimError> {
        while self.ledger.block_due() {
            self.ledger.commit_block_with(self.listener)?;
        }
        Ok(())
    }

    fn submit_single(&mut self, tx: TransactionRecord, kind: FraudKind) -> Result<(), SimError> {
        let verdict = self.ledger.submit(tx.clone());
        self.log(tx, verdict, kind);
        self.seal_due()
    }

    /// Posts a crossing offer and bid around `price` and settles the match.
    /// An unfundable offer is still submitted to the ledger, which rejects it.
    #[allow(clippy::too_many_arguments)]
    fn trade(
        &mut self,
        at: Timestamp,
        seller: &AccountId,
        buyer: &AccountId,
        q: Mwh,
        price: Money,
        sell_attrs: LegAttributes,
        buy_attrs: LegAttributes,
        tags: (FraudKind, FraudKind),
    ) -> Result<(), SimError> {
        let max_half = (self.config.price_mixture.max_half_spread * 100.0).round() as i64;
        let half = Money::from_raw(self.rng.random_range(0..=max_half).min(price.raw()));
        let (sell, buy, verdict) = match self.market.post_offer(&self.ledger, seller, q, price - half, at) {
            Ok(_) => {
                self.market.post_bid(&self.ledger, buyer, q, price + half, at)?;
                let s = self.market.match_orders(at).pop().expect("crossing orders match");
                match self.market.settle(&mut self.ledger, &s, &sell_attrs, &buy_attrs) {
                    Ok((sell, buy)) => (sell, buy, Verdict::Accept),
                    Err(MarketError::Rejected { reason, .. }) => {
                        let (sell, buy) = build_legs(&self.ledger, &s, &sell_attrs, &buy_attrs)?;
                        (sell, buy, Verdict::Reject(reason))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Err(MarketError::InsufficientBalance(_)) => {
                self.next_fallback += 1;
                let settlement_id = format!("X{:07}", self.next_fallback);
                let s = Settlement {
                    offer_id: String::new(),
                    bid_id: String::new(),
                    seller: seller.clone(),
                    buyer: buyer.clone(),
                    quantity_mwh: q,
                    clearing_price: price,
                    matched_at: at,
                    sell_tx_id: format!("{settlement_id}-1"),
                    buy_tx_id: format!("{settlement_id}-2"),
                    settlement_id,
                };
                let (sell, buy) = build_legs(&self.ledger, &s, &sell_attrs, &buy_attrs)?;
                let verdict = self.ledger.submit_all(vec![sell.clone(), buy.clone()]);
                (sell, buy, verdict)
            }
            Err(e) => return Err(e.into()),
        };
        self.log(sell, verdict, tags.0);
        self.log(buy, verdict, tags.1);
        self.seal_due()
    }

    fn draft(&self, id: &AccountId, terms: RecordTerms, attrs: &LegAttributes) -> TransactionRecord {
        let acct = self.ledger.account(id).expect("registered account");
        let mut tx = TransactionRecord::draft(acct, terms, attrs);
        self.ledger.sign_record(&mut tx, &acct.signing_key);
        tx
    }

    fn issue(&mut self, at: Timestamp) -> Result<(), SimError> {
        let auth = self.pick(&self.agents.authorities).clone();
        let to_supplier = !self.agents.suppliers.is_empty()
            && (self.agents.dealers.is_empty() || self.rng.random_bool(self.config.role_mix.supplier_issuance_share));
        let pool = if to_supplier {
            &self.agents.suppliers
        } else if !self.agents.dealers.is_empty() {
            &self.agents.dealers
        } else {
            &self.agents.traders
        };
        let to = self.pick(pool).clone();
        let (q, p) = (self.quantity(), self.price());
        let attrs = self.attrs.draw(&mut self.rng, false);
        let nonce = self.ledger.account(&auth).expect("authority").nonce + 1;
        let terms = RecordTerms {
            transaction_id: self.fresh_id(),
            timestamp: at,
            transaction_type: TxType::Unknown,
            quantity: q,
            price: p,
            nonce,
            counterparty_id: Some(to),
            settlement_id: None,
        };
        let tx = self.draft(&auth, terms, &attrs);
        self.submit_single(tx, FraudKind::None)
    }

    /// Returns false when no trader can fund the trade.
    fn benign_trade(&mut self, at: Timestamp) -> Result<bool, SimError> {
        let (q, p) = (self.quantity(), self.price());
        let buyer = self.pick(&self.agents.traders).clone();
        let Some(seller) = self.eligible_seller(&buyer, q) else {
            return Ok(false);
        };
        let sa = self.attrs.draw(&mut self.rng, false);
        let ba = self.attrs.draw(&mut self.rng, false);
        self.trade(at, &seller, &buyer, q, p, sa, ba, (FraudKind::None, FraudKind::None))?;
        Ok(true)
    }

    fn forced_trade(&mut self, at: Timestamp) -> Result<(), SimError> {
        let (q, p) = (self.quantity(), self.price());
        let buyer = self.pick(&self.agents.traders).clone();
        let seller = self.richest(&self.agents.traders, &buyer);
        let sa = self.attrs.draw(&mut self.rng, false);
        let ba = self.attrs.draw(&mut self.rng, false);
        self.trade(at, &seller, &buyer, q, p, sa, ba, (FraudKind::None, FraudKind::None))
    }

    fn spoof(&mut self, at: Timestamp) -> Result<(), SimError> {
        let victim = self.pick(&self.agents.traders).clone();
        let mut cp = self.pick(&self.agents.traders).clone();
        if cp == victim {
            cp = self.richest(&self.agents.traders, &victim);
        }
        let ty = if self.rng.random_bool(0.5) { TxType::Buy } else { TxType::Sell };
        let (q, p) = (self.quantity(), self.price());
        let mut attrs = self.attrs.draw(&mut self.rng, false);
        attrs.transaction_status = TxStatus::Failed;
        let transaction_id = self.fresh_id();
        let acct = self.ledger.account(&victim).expect("trader");
        let terms = RecordTerms {
            transaction_id,
            timestamp: at,
            transaction_type: ty,
            quantity: q,
            price: p,
            nonce: acct.nonce + 1,
            counterparty_id: Some(cp),
            settlement_id: None,
        };
        let mut tx = TransactionRecord::draft(acct, terms, &attrs);
        let forged_key: [u8; 32] = self.rng.random();
        self.ledger.sign_record(&mut tx, &forged_key);
        self.submit_single(tx, FraudKind::Spoofing)
    }

    /// Re-signs an earlier accepted record under a new id and time, reusing
    /// its nonce.
    fn double_spend(&mut self, at: Timestamp) -> Result<(), SimError> {
        let mut tx = if self.accepted.is_empty() {
            let victim = self.pick(&self.agents.traders).clone();
            let mut attrs = self.attrs.draw(&mut self.rng, false);
            attrs.transaction_status = TxStatus::Failed;
            let (q, p) = (self.quantity(), self.price());
            let acct = self.ledger.account(&victim).expect("trader");
            let terms = RecordTerms {
                transaction_id: String::new(),
                timestamp: at,
                transaction_type: TxType::Buy,
                quantity: q,
                price: p,
                nonce: acct.nonce,
                counterparty_id: None,
                settlement_id: None,
            };
            TransactionRecord::draft(acct, terms, &attrs)
        } else {
            let i = self.accepted[self.rng.random_range(0..self.accepted.len())];
            self.records[i].clone()
        };
        tx.transaction_id = self.fresh_id();
        tx.timestamp = at;
        let key = self.ledger.account(&tx.account_id).expect("registered").signing_key.clone();
        self.ledger.sign_record(&mut tx, &key);
        self.submit_single(tx, FraudKind::DoubleSpend)
    }

    fn meter_inflation(&mut self, at: Timestamp) -> Result<(), SimError> {
        let nobody = AccountId(String::new());
        let seller = self.richest(&self.agents.suppliers, &nobody);
        let cap = self.ledger.account(&seller).expect("supplier").capacity_mwh;
        let q = Mwh::from_f64(cap.to_f64() * self.rng.random_range(1.5..2.5));
        let mut buyer = self.pick(&self.agents.traders).clone();
        if buyer == seller {
            buyer = self.richest(&self.agents.traders, &seller);
        }
        let p = self.price();
        let sa = self.attrs.draw(&mut self.rng, false);
        let ba = self.attrs.draw(&mut self.rng, false);
        self.trade(at, &seller, &buyer, q, p, sa, ba, (FraudKind::MeterInflation, FraudKind::None))
    }

    fn wash(&mut self, at: Timestamp, pair: usize, q: Mwh) -> Result<(), SimError> {
        let (a, b) = self.agents.wash_pairs[pair].clone();
        let preferred = match self.wash_last_seller.get(&pair) {
            Some(last) if *last == a => b.clone(),
            _ => a.clone(),
        };
        let other = if preferred == a { b.clone() } else { a.clone() };
        let seller = if self.unreserved(&preferred) >= q || self.unreserved(&other) < q { preferred } else { other };
        let buyer = if seller == a { b } else { a };
        self.wash_last_seller.insert(pair, seller.clone());
        let p = self.price();
        let sa = self.attrs.draw(&mut self.rng, false);
        let ba = self.attrs.draw(&mut self.rng, false);
        self.trade(at, &seller, &buyer, q, p, sa, ba, (FraudKind::WashTrade, FraudKind::WashTrade))
    }

    /// A tagged purchase by `buyer` from an honest seller.
    fn tagged_buy(&mut self, at: Timestamp, buyer: &AccountId, q: Mwh, kind: FraudKind) -> Result<(), SimError> {
        let seller = match self.eligible_seller(buyer, q) {
            Some(s) => s,
            None => self.richest(&self.agents.traders, buyer),
        };
        let p = self.price();
        let sa = self.attrs.draw(&mut self.rng, false);
        let ba = self.attrs.draw(&mut self.rng, kind == FraudKind::SybilBurst);
        self.trade(at, &seller, buyer, q, p, sa, ba, (FraudKind::None, kind))
    }
}

/// Generates a scenario without a live listener.
pub fn generate(config: &ScenarioConfig) -> Result<SimOutput, SimError> {
    generate_with(config, &mut |_: &mut Ledger, _: &LedgerEvent| {})
}

/// Generates a scenario, showing every sealed block's events to `listener`.
pub fn generate_with(config: &ScenarioConfig, listener: &mut dyn EventListener) -> Result<SimOutput, SimError> {
    config.validate()?;
    let agents = generate_agents(config);
    let off_peak = OffPeakHours::from_config(config);
    let counts = fraud_budget(config)?;
    check_feasible(config, &agents, &off_peak, &counts)?;
    let mut actions = plan_actions(config, &agents, &off_peak, &counts);

    let ledger = Ledger::new(
        LedgerConfig {
            block_size: config.block_size,
            ..LedgerConfig::default()
        },
        agents.accounts.iter().cloned(),
        agents.authorities.clone(),
    )?;
    let forced_failed = counts[FraudKind::Spoofing.index()] + counts[FraudKind::DoubleSpend.index()];
    let p = &config.price_mixture;
    let mut ex = Executor {
        config,
        agents: &agents,
        listener,
        rng: stream(config.seed, "execute"),
        attrs: Attributes::new(config, forced_failed),
        normal: Normal::new(p.normal_mean, p.normal_sd).expect("validated sd"),
        ledger,
        market: Market::new(),
        records: Vec::with_capacity(config.n_transactions),
        verdicts: Vec::with_capacity(config.n_transactions),
        truth: GroundTruth::default(),
        accepted: Vec::new(),
        wash_last_seller: BTreeMap::new(),
        next_id: 0,
        next_fallback: 0,
    };

    let mut i = 0;
    while i < actions.len() {
        let at = actions[i].at;
        match actions[i].plan.clone() {
            Plan::Issue => ex.issue(at)?,
            Plan::Trade => {
                if !ex.benign_trade(at)? {
                    // Nobody holds enough yet: issue now and trade in the
                    // next issuance slot instead.
                    match (i + 1..actions.len()).find(|&j| matches!(actions[j].plan, Plan::Issue)) {
                        Some(j) => {
                            actions[j].plan = Plan::Trade;
                            actions[i].plan = Plan::Issue;
                            continue;
                        }
                        None => ex.forced_trade(at)?,
                    }
                }
            }
            Plan::Spoof => ex.spoof(at)?,
            Plan::DoubleSpend => ex.double_spend(at)?,
            Plan::MeterInflation => ex.meter_inflation(at)?,
            Plan::Wash { pair, quantity } => ex.wash(at, pair, quantity)?,
            Plan::Sybil { buyer } => {
                let q = ex.quantity();
                ex.tagged_buy(at, &buyer, q, FraudKind::SybilBurst)?
            }
            Plan::OffPeak { buyer } => {
                let median = config.quantity_max_mwh / 2.0;
                let q = Mwh::from_f64(median * ex.rng.random_range(2.5..3.5));
                ex.tagged_buy(at, &buyer, q, FraudKind::OffPeakBurst)?
            }
        }
        i += 1;
    }
    ex.ledger.flush_with(ex.listener)?;

    let Executor {
        ledger,
        market,
        records,
        verdicts,
        truth,
        ..
    } = ex;
    Ok(SimOutput {
        config: config.clone(),
        agents,
        records,
        verdicts,
        truth,
        ledger,
        market,
        off_peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_off_peak_is_the_quiet_hour() {
        let cfg = ScenarioConfig::default();
        let op = OffPeakHours::from_config(&cfg);
        assert_eq!(op.offsets, BTreeSet::from([1]));
        assert!(op.contains(&(cfg.start + chrono::Duration::minutes(61))));
        assert!(!op.contains(&(cfg.start + chrono::Duration::minutes(59))));
    }

    #[test]
    fn budget_keeps_wash_even() {
        let cfg = ScenarioConfig::default();
        let counts = fraud_budget(&cfg).unwrap();
        assert_eq!(counts.iter().sum::<usize>(), 700);
        assert_eq!(counts[FraudKind::WashTrade.index()] % 2, 0);
        let only_wash = ScenarioConfig {
            fraud_mix: FraudMix::only(FraudKind::WashTrade),
            n_transactions: 101,
            fraud_rate: 0.07,
            ..cfg
        };
        assert!(matches!(fraud_budget(&only_wash), Err(SimError::FraudRateInfeasible { .. })));
    }

    #[test]
    fn ramp_front_loads_the_hour() {
        let cfg = ScenarioConfig::default();
        let clock = Clock::new(&cfg);
        let mut rng = stream(1, "t");
        let times = clock.spread(&mut rng, 4000);
        let first_half = times.iter().filter(|t| (**t - cfg.start).num_seconds() < 1800).count();
        // Density 2(1-x): three quarters of the hour's mass lies in its first half.
        assert!((2850..=3150).contains(&first_half), "{first_half}");
    }
}
