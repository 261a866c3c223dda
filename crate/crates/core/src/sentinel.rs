//! Off-chain fraud sentinel.
//!
//! The sentinel sees every `TransactionVerified` event in log order, keeps
//! trailing per-account and per-origin windows, scores the transaction with
//! a binary fraud model and holds it when the score reaches the policy
//! threshold. A reviewer later releases or rejects each hold. Sybil clusters
//! are found by a separate rule that never consults the model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRow;
use crate::eval::roc_auc;
use crate::ledger::{
    Account, AccountId, EventKind, EventListener, Ledger, LedgerError, LedgerEvent, TransactionRecord, TxType,
};
use crate::matrix::Matrix;
use crate::models::{Model, ModelError, ModelKind, TrainConfig};
use crate::numeric::{mean, median, std_dev};
use crate::pipeline::{stratified_split, FittedPreprocessor, PipelineError, Scaler};
use crate::rng::derive_seed;
use crate::simgen::{generate, generate_with, FraudKind, FraudMix, OffPeakHours, ScenarioConfig, SimError};
use crate::time::{serde_ts, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum SentinelError {
    #[error("history for account {0} is not sorted by timestamp")]
    UnsortedHistory(AccountId),
    #[error("no fraud model loaded")]
    ModelMissing,
    #[error("invalid sentinel policy: {0}")]
    InvalidPolicy(String),
    #[error("alert for {0} is already closed")]
    AlertClosed(String),
    #[error("no alert for transaction {0}")]
    UnknownAlert(String),
    #[error("event {seq} points at a missing chain position")]
    DanglingEvent { seq: u64 },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentinelPolicy {
    /// Hold when the fraud probability is at least this.
    pub threshold: f64,
    pub window_secs: i64,
    /// Smallest number of accounts that makes a Sybil cluster.
    pub sybil_k: usize,
    /// Largest median inter-arrival, in seconds, of a Sybil burst.
    pub sybil_gap_secs: f64,
}

impl Default for SentinelPolicy {
    fn default() -> Self {
        SentinelPolicy {
            threshold: 0.5,
            window_secs: 3600,
            sybil_k: 5,
            sybil_gap_secs: 2.0,
        }
    }
}

impl SentinelPolicy {
    pub fn validate(&self) -> Result<(), SentinelError> {
        let bad = |m: &str| Err(SentinelError::InvalidPolicy(m.to_string()));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must be in (0, 1)");
        }
        if self.window_secs <= 0 {
            return bad("window_secs must be positive");
        }
        if self.sybil_k < 2 {
            return bad("sybil_k must be at least 2");
        }
        if !(self.sybil_gap_secs >= 0.0 && self.sybil_gap_secs.is_finite()) {
            return bad("sybil_gap_secs must be finite and non-negative");
        }
        Ok(())
    }

    fn window(&self) -> chrono::Duration {
        chrono::Duration::seconds(self.window_secs)
    }
}

/// The parts of a record the behaviour statistics look at.
#[derive(Clone, Debug, PartialEq)]
pub struct TxView {
    pub transaction_id: String,
    pub account: AccountId,
    pub origin: String,
    pub counterparty: Option<AccountId>,
    pub timestamp: Timestamp,
    pub quantity: f64,
    /// Registered generation capacity of the account.
    pub capacity: f64,
    pub tx_type: TxType,
    pub latency_ms: f64,
}

impl TxView {
    pub fn from_record(tx: &TransactionRecord, account: &Account) -> Self {
        TxView {
            transaction_id: tx.transaction_id.clone(),
            account: tx.account_id.clone(),
            origin: account.origin_address.clone(),
            capacity: account.capacity_mwh.to_f64(),
            counterparty: tx.counterparty_id.clone(),
            timestamp: tx.timestamp,
            quantity: tx.electricity_quantity.to_f64(),
            tx_type: tx.transaction_type,
            latency_ms: tx.latency_ms,
        }
    }

    /// Signed quantity from the account's side: purchases count positive.
    fn net(&self) -> f64 {
        match self.tx_type {
            TxType::Buy => self.quantity,
            TxType::Sell | TxType::Unknown => -self.quantity,
        }
    }
}

/// Statistics of an account's trailing window, ending at the current
/// transaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorFeatures {
    /// Prior transactions in the window per hour.
    pub transaction_rate: f64,
    pub volume_mean: f64,
    pub volume_std: f64,
    pub volume_zscore: f64,
    /// Current quantity over the account's registered capacity.
    pub capacity_ratio: f64,
    pub off_peak_share: f64,
    pub origin_fanin: f64,
    pub min_interarrival: f64,
    /// `|net| / gross` MWh with the current counterparty; 0 is a perfect
    /// wash pattern.
    pub pair_discrepancy: f64,
    /// Trades with the current counterparty in the window, this one included.
    pub pair_trade_count: f64,
    pub latency_ms: f64,
}

impl BehaviorFeatures {
    pub const NAMES: [&'static str; 11] = [
        "transaction_rate",
        "volume_mean",
        "volume_std",
        "volume_zscore",
        "capacity_ratio",
        "off_peak_share",
        "origin_fanin",
        "min_interarrival",
        "pair_discrepancy",
        "pair_trade_count",
        "latency_ms",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.transaction_rate,
            self.volume_mean,
            self.volume_std,
            self.volume_zscore,
            self.capacity_ratio,
            self.off_peak_share,
            self.origin_fanin,
            self.min_interarrival,
            self.pair_discrepancy,
            self.pair_trade_count,
            self.latency_ms,
        ]
    }
}

fn check_sorted<'a>(tx: &TxView, items: impl Iterator<Item = &'a TxView>) -> Result<(), SentinelError> {
    let mut last: Option<Timestamp> = None;
    for h in items {
        if last.is_some_and(|l| h.timestamp < l) || h.timestamp > tx.timestamp {
            return Err(SentinelError::UnsortedHistory(h.account.clone()));
        }
        last = Some(h.timestamp);
    }
    Ok(())
}

/// Computes the features of `tx` from the account's prior transactions and
/// the prior transactions of every account on the same origin address.
/// Both slices must be sorted by timestamp and end no later than `tx`.
pub fn compute_behavior_features(
    tx: &TxView,
    history: &[TxView],
    origin_peers: &[TxView],
    policy: &SentinelPolicy,
    off_peak: &OffPeakHours,
) -> Result<BehaviorFeatures, SentinelError> {
    check_sorted(tx, history.iter())?;
    check_sorted(tx, origin_peers.iter())?;
    let since = tx.timestamp - policy.window();
    let window: Vec<&TxView> = history.iter().filter(|h| h.timestamp >= since).collect();
    let volumes: Vec<f64> = window.iter().map(|h| h.quantity).collect();
    let (volume_mean, volume_std) = (mean(&volumes), std_dev(&volumes));
    let volume_zscore = if volume_std > 0.0 { (tx.quantity - volume_mean) / volume_std } else { 0.0 };

    let with_current = || window.iter().copied().chain(std::iter::once(tx));
    let off = with_current().filter(|h| off_peak.contains(&h.timestamp)).count();
    let off_peak_share = off as f64 / (window.len() + 1) as f64;

    let mut accounts: BTreeSet<&AccountId> =
        origin_peers.iter().filter(|p| p.timestamp >= since).map(|p| &p.account).collect();
    accounts.insert(&tx.account);

    let times: Vec<Timestamp> = with_current().map(|h| h.timestamp).collect();
    let min_interarrival = times
        .windows(2)
        .map(|w| (w[1] - w[0]).num_milliseconds() as f64 / 1000.0)
        .fold(policy.window_secs as f64, f64::min);

    let (pair_discrepancy, pair_trade_count) = match &tx.counterparty {
        None => (1.0, 0.0),
        Some(cp) => {
            let (mut net, mut gross, mut count) = (0.0, 0.0, 0usize);
            for h in with_current().filter(|h| h.counterparty.as_ref() == Some(cp)) {
                net += h.net();
                gross += h.quantity;
                count += 1;
            }
            let d = if gross > 0.0 { (net.abs() / gross).min(1.0) } else { 1.0 };
            (d, count as f64)
        }
    };

    Ok(BehaviorFeatures {
        transaction_rate: window.len() as f64 * 3600.0 / policy.window_secs as f64,
        volume_mean,
        volume_std,
        volume_zscore,
        capacity_ratio: if tx.capacity > 0.0 { tx.quantity / tx.capacity } else { 0.0 },
        off_peak_share,
        origin_fanin: accounts.len() as f64,
        min_interarrival,
        pair_discrepancy,
        pair_trade_count,
        latency_ms: tx.latency_ms,
    })
}

/// Trailing windows per account and per origin address, pruned to the
/// policy window as transactions arrive.
#[derive(Clone, Debug, Default)]
pub struct Tracker {
    by_account: BTreeMap<AccountId, VecDeque<TxView>>,
    by_origin: BTreeMap<String, VecDeque<TxView>>,
}

impl Tracker {
    /// Features of `tx` against everything observed so far; `tx` then joins
    /// the windows.
    pub fn observe(
        &mut self,
        tx: TxView,
        policy: &SentinelPolicy,
        off_peak: &OffPeakHours,
    ) -> Result<BehaviorFeatures, SentinelError> {
        let since = tx.timestamp - policy.window();
        let history = self.by_account.entry(tx.account.clone()).or_default();
        while history.front().is_some_and(|h| h.timestamp < since) {
            history.pop_front();
        }
        let peers = self.by_origin.entry(tx.origin.clone()).or_default();
        while peers.front().is_some_and(|h| h.timestamp < since) {
            peers.pop_front();
        }
        let f = compute_behavior_features(
            &tx,
            history.make_contiguous(),
            peers.make_contiguous(),
            policy,
            off_peak,
        )?;
        history.push_back(tx.clone());
        peers.push_back(tx);
        Ok(f)
    }
}

/// The record behind a `TransactionVerified` event.
fn verified_record<'a>(ledger: &'a Ledger, event: &LedgerEvent) -> Result<&'a TransactionRecord, SentinelError> {
    let pos = |k: &str| event.payload.get(k).and_then(|v| v.parse::<usize>().ok());
    let dangling = || SentinelError::DanglingEvent { seq: event.seq };
    let (h, i) = pos("height").zip(pos("index")).ok_or_else(dangling)?;
    ledger.blocks().get(h).and_then(|b| b.transactions.get(i)).ok_or_else(dangling)
}

fn view_of(ledger: &Ledger, tx: &TransactionRecord) -> Result<TxView, SentinelError> {
    let account = ledger
        .account(&tx.account_id)
        .ok_or_else(|| SentinelError::Ledger(LedgerError::UnknownTransaction(tx.transaction_id.clone())))?;
    Ok(TxView::from_record(tx, account))
}

/// Every chained transaction in event-log order with the features the live
/// sentinel would have computed for it.
pub fn behavior_table(
    ledger: &Ledger,
    policy: &SentinelPolicy,
    off_peak: &OffPeakHours,
) -> Result<Vec<(TransactionRecord, BehaviorFeatures)>, SentinelError> {
    let mut tracker = Tracker::default();
    let mut out = Vec::new();
    for ev in ledger.events().iter().filter(|e| e.kind == EventKind::TransactionVerified) {
        let tx = verified_record(ledger, ev)?;
        let f = tracker.observe(view_of(ledger, tx)?, policy, off_peak)?;
        out.push((tx.clone(), f));
    }
    Ok(out)
}

/// Accounts on one origin address flagged as a Sybil cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SybilCluster {
    pub origin: String,
    pub accounts: Vec<AccountId>,
}

/// Rule-based Sybil detection over a transaction history.
///
/// Per origin address the pooled transactions are scanned in time order.
/// At each transaction the shortest trailing run (within the policy window)
/// that covers `sybil_k` distinct accounts is examined; if its median
/// inter-arrival is at most `sybil_gap_secs`, its accounts are flagged.
/// Each origin yields one cluster holding every flagged account.
pub fn detect_sybil(history: &[TxView], policy: &SentinelPolicy) -> Vec<SybilCluster> {
    let mut by_origin: BTreeMap<&str, Vec<&TxView>> = BTreeMap::new();
    for t in history {
        by_origin.entry(&t.origin).or_default().push(t);
    }
    let mut out = Vec::new();
    for (origin, mut txs) in by_origin {
        let distinct: BTreeSet<&AccountId> = txs.iter().map(|t| &t.account).collect();
        if distinct.len() < policy.sybil_k {
            continue;
        }
        txs.sort_by_key(|t| t.timestamp);
        let mut flagged: BTreeSet<AccountId> = BTreeSet::new();
        for j in 0..txs.len() {
            let since = txs[j].timestamp - policy.window();
            let mut seen: BTreeSet<&AccountId> = BTreeSet::new();
            let mut start = None;
            for i in (0..=j).rev() {
                if txs[i].timestamp < since {
                    break;
                }
                seen.insert(&txs[i].account);
                if seen.len() >= policy.sybil_k {
                    start = Some(i);
                    break;
                }
            }
            let Some(i) = start else { continue };
            let gaps: Vec<f64> = txs[i..=j]
                .windows(2)
                .map(|w| (w[1].timestamp - w[0].timestamp).num_milliseconds() as f64 / 1000.0)
                .collect();
            if median(&gaps) <= policy.sybil_gap_secs {
                flagged.extend(seen.into_iter().cloned());
            }
        }
        if !flagged.is_empty() {
            out.push(SybilCluster {
                origin: origin.to_string(),
                accounts: flagged.into_iter().collect(),
            });
        }
    }
    out
}

/// Binary fraud model over behaviour features followed by the row's
/// pipeline features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub prep: FittedPreprocessor,
    pub behavior_scaler: Scaler,
    /// Benign-row mean and standard deviation of each behaviour feature.
    pub baseline_mean: Vec<f64>,
    pub baseline_sd: Vec<f64>,
    pub model: Model,
}

fn behavior_matrix(features: &[BehaviorFeatures]) -> Matrix {
    Matrix::from_rows(&features.iter().map(BehaviorFeatures::values).collect::<Vec<_>>())
}

fn dataset_rows(records: &[TransactionRecord]) -> Vec<DatasetRow> {
    records.iter().map(|tx| DatasetRow::from_record(tx, tx.transaction_status)).collect()
}

fn assemble(
    prep: &FittedPreprocessor,
    scaler: &Scaler,
    records: &[TransactionRecord],
    features: &[BehaviorFeatures],
) -> Result<Matrix, SentinelError> {
    let mut b = behavior_matrix(features);
    scaler.apply(&mut b);
    let p = prep.transform(&dataset_rows(records), None::<&[&str]>)?;
    Ok(b.hstack(&p.x))
}

impl Detector {
    pub fn fit(
        records: &[TransactionRecord],
        features: &[BehaviorFeatures],
        is_fraud: &[bool],
        config: &TrainConfig,
    ) -> Result<Self, SentinelError> {
        let labels: Vec<&str> = is_fraud.iter().map(|&f| if f { "fraud" } else { "benign" }).collect();
        let rows = dataset_rows(records);
        let prep = FittedPreprocessor::fit(&rows, &labels)?;
        let b = behavior_matrix(features);
        let behavior_scaler = Scaler::fit(&b);
        let benign: Vec<usize> = (0..is_fraud.len()).filter(|&i| !is_fraud[i]).collect();
        let base = if benign.is_empty() { b.clone() } else { b.select_rows(&benign) };
        let baseline_mean: Vec<f64> = (0..base.cols()).map(|j| mean(&base.column(j))).collect();
        let baseline_sd: Vec<f64> = (0..base.cols()).map(|j| std_dev(&base.column(j))).collect();
        let x = assemble(&prep, &behavior_scaler, records, features)?;
        let y: Vec<usize> = is_fraud.iter().map(|&f| f as usize).collect();
        let model = Model::train(&x, &y, 2, config)?;
        Ok(Detector {
            prep,
            behavior_scaler,
            baseline_mean,
            baseline_sd,
            model,
        })
    }

    pub fn matrix(&self, records: &[TransactionRecord], features: &[BehaviorFeatures]) -> Result<Matrix, SentinelError> {
        assemble(&self.prep, &self.behavior_scaler, records, features)
    }

    /// Fraud probability per record.
    pub fn score(&self, records: &[TransactionRecord], features: &[BehaviorFeatures]) -> Result<Vec<f64>, SentinelError> {
        let p = self.model.predict_proba(&self.matrix(records, features)?)?;
        Ok(p.column(1))
    }

    /// Behaviour features at least three benign standard deviations from the
    /// benign mean.
    pub fn triggered(&self, f: &BehaviorFeatures) -> Vec<(String, f64)> {
        BehaviorFeatures::NAMES
            .iter()
            .zip(f.values())
            .enumerate()
            .filter(|(j, (_, v))| {
                let d = (v - self.baseline_mean[*j]).abs();
                d > 0.0 && d >= 3.0 * self.baseline_sd[*j]
            })
            .map(|(_, (n, v))| (n.to_string(), v))
            .collect()
    }
}

labeled_enum! {
    pub enum AlertState {
        Open => "Open",
        Released => "Released",
        Rejected => "Rejected",
    }
}

labeled_enum! {
    pub enum Decision {
        Release => "release",
        Reject => "reject",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alert {
    pub transaction_id: String,
    pub account_id: AccountId,
    pub score: f64,
    pub triggered_features: Vec<(String, f64)>,
    pub state: AlertState,
    #[serde(with = "serde_ts")]
    pub raised_at: Timestamp,
}

/// One reviewer decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adjudication {
    pub transaction_id: String,
    pub decision: Decision,
    #[serde(with = "serde_ts")]
    pub decided_at: Timestamp,
    /// Whether the settlement completed as a result of a release.
    pub settled: bool,
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), SentinelError> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<T>, SentinelError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Applies a reviewer decision to the open alert on `tx_id`. A rejection
/// reverts the whole settlement group, so alerts on the other rejected legs
/// are closed too.
pub fn adjudicate(
    alerts: &mut [Alert],
    ledger: &mut Ledger,
    tx_id: &str,
    decision: Decision,
    at: Timestamp,
) -> Result<Adjudication, SentinelError> {
    let alert = alerts
        .iter_mut()
        .find(|a| a.transaction_id == tx_id)
        .ok_or_else(|| SentinelError::UnknownAlert(tx_id.to_string()))?;
    if alert.state != AlertState::Open {
        return Err(SentinelError::AlertClosed(tx_id.to_string()));
    }
    let settled = match decision {
        Decision::Release => {
            let settled = ledger.release(tx_id, at)?;
            alert.state = AlertState::Released;
            settled
        }
        Decision::Reject => {
            let from = ledger.events().len();
            ledger.reject(tx_id, at)?;
            let rejected: BTreeSet<&str> = ledger.events()[from..]
                .iter()
                .filter(|e| e.kind == EventKind::TransactionRejected)
                .map(|e| e.transaction_id.as_str())
                .collect();
            for a in alerts.iter_mut() {
                if a.state == AlertState::Open && rejected.contains(a.transaction_id.as_str()) {
                    a.state = AlertState::Rejected;
                }
            }
            false
        }
    };
    Ok(Adjudication {
        transaction_id: tx_id.to_string(),
        decision,
        decided_at: at,
        settled,
    })
}

/// The live listener.
#[derive(Clone, Debug)]
pub struct Sentinel {
    pub policy: SentinelPolicy,
    pub off_peak: OffPeakHours,
    pub detector: Option<Detector>,
    tracker: Tracker,
    history: Vec<TxView>,
    scores: Vec<(String, f64)>,
    alerts: Vec<Alert>,
    alerted: BTreeSet<String>,
    adjudications: Vec<Adjudication>,
    first_error: Option<String>,
}

impl Sentinel {
    pub fn new(policy: SentinelPolicy, off_peak: OffPeakHours, detector: Option<Detector>) -> Result<Self, SentinelError> {
        policy.validate()?;
        Ok(Sentinel {
            policy,
            off_peak,
            detector,
            tracker: Tracker::default(),
            history: Vec::new(),
            scores: Vec::new(),
            alerts: Vec::new(),
            alerted: BTreeSet::new(),
            adjudications: Vec::new(),
            first_error: None,
        })
    }

    /// Every verified transaction seen so far, in event order.
    pub fn history(&self) -> &[TxView] {
        &self.history
    }

    /// `(transaction_id, score)` for every scored transaction.
    pub fn scores(&self) -> &[(String, f64)] {
        &self.scores
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn adjudications(&self) -> &[Adjudication] {
        &self.adjudications
    }

    /// The first error raised while acting as an [`EventListener`].
    pub fn first_error(&self) -> Option<&str> {
        self.first_error.as_deref()
    }

    /// Handles one event. Verified transactions always join the windows;
    /// without a detector nothing is scored and `ModelMissing` is returned.
    pub fn process(&mut self, ledger: &mut Ledger, event: &LedgerEvent) -> Result<Option<Alert>, SentinelError> {
        if event.kind != EventKind::TransactionVerified {
            return Ok(None);
        }
        let tx = verified_record(ledger, event)?.clone();
        let view = view_of(ledger, &tx)?;
        self.history.push(view.clone());
        let f = self.tracker.observe(view, &self.policy, &self.off_peak)?;
        let detector = self.detector.as_ref().ok_or(SentinelError::ModelMissing)?;
        let score = detector.score(std::slice::from_ref(&tx), &[f])?[0];
        self.scores.push((tx.transaction_id.clone(), score));
        if score < self.policy.threshold || self.alerted.contains(&tx.transaction_id) {
            return Ok(None);
        }
        ledger.hold(&tx.transaction_id, event.emitted_at, &format!("sentinel score {score:.4}"))?;
        let alert = Alert {
            transaction_id: tx.transaction_id.clone(),
            account_id: tx.account_id.clone(),
            score,
            triggered_features: detector.triggered(&f),
            state: AlertState::Open,
            raised_at: event.emitted_at,
        };
        self.alerted.insert(tx.transaction_id);
        self.alerts.push(alert.clone());
        Ok(Some(alert))
    }

    pub fn adjudicate(
        &mut self,
        ledger: &mut Ledger,
        tx_id: &str,
        decision: Decision,
        at: Timestamp,
    ) -> Result<Adjudication, SentinelError> {
        let a = adjudicate(&mut self.alerts, ledger, tx_id, decision, at)?;
        self.adjudications.push(a.clone());
        Ok(a)
    }
}

impl EventListener for Sentinel {
    fn on_event(&mut self, ledger: &mut Ledger, event: &LedgerEvent) {
        if let Err(e) = self.process(ledger, event) {
            self.first_error.get_or_insert_with(|| e.to_string());
        }
    }
}

/// Binary fraud metrics; undefined ratios are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub n: usize,
    pub positives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
}

impl BinaryMetrics {
    pub fn from_scores(truth: &[bool], scores: &[f64], threshold: f64) -> Self {
        let (mut tp, mut fp, mut fneg) = (0, 0, 0);
        for (&t, &s) in truth.iter().zip(scores) {
            match (t, s >= threshold) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => Some(crate::eval::f1_score(p, r)),
            _ => None,
        };
        BinaryMetrics {
            n: truth.len(),
            positives: tp + fneg,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fneg,
            precision,
            recall,
            f1,
            roc_auc: roc_auc(truth, scores).ok(),
        }
    }
}

labeled_enum! {
    pub enum CaseStudy {
        SupplierBurst => "SupplierBurst",
        SybilAttack => "SybilAttack",
    }
}

/// Everything a case study run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub case: CaseStudy,
    pub scenario: ScenarioConfig,
    pub model: TrainConfig,
    pub policy: SentinelPolicy,
    pub test_fraction: f64,
}

impl CaseStudyConfig {
    /// A diurnal day with 7% fraud of the case's kind. Supplier bursts are
    /// scored by boosted trees and Sybil attacks by a forest.
    pub fn preset(case: CaseStudy, seed: u64) -> Self {
        let (kind, model) = match case {
            CaseStudy::SupplierBurst => (FraudKind::OffPeakBurst, ModelKind::GradientBoosted),
            CaseStudy::SybilAttack => (FraudKind::SybilBurst, ModelKind::RandomForest),
        };
        CaseStudyConfig {
            case,
            scenario: ScenarioConfig {
                fraud_mix: FraudMix::only(kind),
                ..ScenarioConfig::diurnal(seed, 10_000)
            },
            model: TrainConfig::for_kind(model, derive_seed(seed, "casestudy-model")),
            policy: SentinelPolicy::default(),
            test_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub case: CaseStudy,
    pub seed: u64,
    pub model_kind: ModelKind,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Held-out split of the training run.
    pub offline: BinaryMetrics,
    /// The sentinel scoring a fresh run live.
    pub live: BinaryMetrics,
    pub alerts: Vec<Alert>,
    pub sybil_injected: Vec<Vec<AccountId>>,
    pub sybil_flagged: Vec<SybilCluster>,
    /// Injected clusters matched exactly by a flagged cluster.
    pub sybil_detected: usize,
    /// Flagged clusters matching no injected cluster.
    pub sybil_false: usize,
    pub notes: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

impl fmt::Display for CaseStudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "case study {} (seed {}, model {})", self.case, self.seed, self.model_kind)?;
        writeln!(f, "training rows {}, held-out rows {}", self.train_rows, self.test_rows)?;
        for (label, m) in [("offline", &self.offline), ("live", &self.live)] {
            writeln!(
                f,
                "{label:<8} n={} fraud={} precision={} recall={} f1={} roc_auc={}",
                m.n,
                m.positives,
                fmt_opt(m.precision),
                fmt_opt(m.recall),
                fmt_opt(m.f1),
                fmt_opt(m.roc_auc)
            )?;
        }
        writeln!(
            f,
            "sybil clusters: injected {}, flagged {}, detected {}, false {}",
            self.sybil_injected.len(),
            self.sybil_flagged.len(),
            self.sybil_detected,
            self.sybil_false
        )?;
        writeln!(f, "alerts {}", self.alerts.len())?;
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

pub fn run_case_study(case: CaseStudy, seed: u64) -> Result<CaseStudyReport, SentinelError> {
    run_case_study_with(&CaseStudyConfig::preset(case, seed))
}

/// Trains a detector on one seeded run, then lets the sentinel score a
/// second run live. The runs are separate because live holds change how the
/// rest of a run unfolds.
pub fn run_case_study_with(config: &CaseStudyConfig) -> Result<CaseStudyReport, SentinelError> {
    Ok(run_case_study_live(config)?.report)
}

/// A case study together with the live run's ledger and sentinel, whose
/// holds stay open for adjudication.
#[derive(Debug)]
pub struct CaseStudyRun {
    pub report: CaseStudyReport,
    pub ledger: Ledger,
    pub sentinel: Sentinel,
}

pub fn run_case_study_live(config: &CaseStudyConfig) -> Result<CaseStudyRun, SentinelError> {
    config.policy.validate()?;
    let seed = config.scenario.seed;
    let train_cfg = ScenarioConfig {
        seed: derive_seed(seed, "casestudy-train"),
        ..config.scenario.clone()
    };
    let train_run = generate(&train_cfg)?;
    let table = behavior_table(&train_run.ledger, &config.policy, &train_run.off_peak)?;
    let (records, features): (Vec<TransactionRecord>, Vec<BehaviorFeatures>) = table.into_iter().unzip();
    let labels: Vec<bool> = records.iter().map(|r| train_run.truth.is_fraud(&r.transaction_id)).collect();
    let split = stratified_split(&labels, config.test_fraction, derive_seed(seed, "casestudy-split"))?;
    let pick = |idx: &[usize]| {
        (
            idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>(),
            idx.iter().map(|&i| features[i]).collect::<Vec<_>>(),
            idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        )
    };
    let (tr_rec, tr_feat, tr_y) = pick(&split.train);
    let (te_rec, te_feat, te_y) = pick(&split.test);
    let detector = Detector::fit(&tr_rec, &tr_feat, &tr_y, &config.model)?;
    let offline = BinaryMetrics::from_scores(&te_y, &detector.score(&te_rec, &te_feat)?, config.policy.threshold);

    let off_peak = OffPeakHours::from_config(&config.scenario);
    let mut sentinel = Sentinel::new(config.policy, off_peak, Some(detector))?;
    let eval_run = generate_with(&config.scenario, &mut sentinel)?;
    if let Some(e) = sentinel.first_error() {
        return Err(SentinelError::InvalidPolicy(format!("sentinel failed during the live run: {e}")));
    }
    let truth: Vec<bool> = sentinel.scores().iter().map(|(id, _)| eval_run.truth.is_fraud(id)).collect();
    let scores: Vec<f64> = sentinel.scores().iter().map(|(_, s)| *s).collect();
    let live = BinaryMetrics::from_scores(&truth, &scores, config.policy.threshold);

    let sybil_flagged = detect_sybil(sentinel.history(), &config.policy);
    let sybil_injected: Vec<Vec<AccountId>> = eval_run
        .agents
        .sybil_clusters
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort();
            c
        })
        .collect();
    let sybil_detected = sybil_injected.iter().filter(|c| sybil_flagged.iter().any(|f| &f.accounts == *c)).count();
    let sybil_false = sybil_flagged.iter().filter(|f| !sybil_injected.contains(&f.accounts)).count();

    let mut notes = Vec::new();
    if live.positives == 0 {
        notes.push("no fraudulent transactions in the live run; recall is undefined".to_string());
    }
    if live.precision.is_none() {
        notes.push("no alerts raised; precision is undefined".to_string());
    }
    let report = CaseStudyReport {
        case: config.case,
        seed,
        model_kind: config.model.model_kind,
        train_rows: split.train.len(),
        test_rows: split.test.len(),
        offline,
        live,
        alerts: sentinel.alerts().to_vec(),
        sybil_injected,
        sybil_flagged,
        sybil_detected,
        sybil_false,
        notes,
    };
    Ok(CaseStudyRun {
        report,
        ledger: eval_run.ledger,
        sentinel,
    })
}
