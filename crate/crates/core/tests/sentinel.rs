mod common;

use std::collections::BTreeSet;

use common::{id, money, mwh, ts, Fixture};
use gridledger_core::ledger::{AccountId, EventKind, Ledger, LedgerEvent, TxPhase, TxStatus, TxType};
use gridledger_core::models::{LinearModel, Model, TrainConfig};
use gridledger_core::numeric::{mean, std_dev};
use gridledger_core::sentinel::*;
use gridledger_core::simgen::{generate, generate_with, FraudKind, OffPeakHours, ScenarioConfig};
use gridledger_core::{Matrix, Mwh};
use proptest::prelude::*;

fn no_off_peak() -> OffPeakHours {
    OffPeakHours {
        start: ts(0),
        offsets: BTreeSet::new(),
    }
}

fn view(tx_id: &str, account: &str, origin: &str, cp: Option<&str>, at: i64, q: f64, ty: TxType) -> TxView {
    TxView {
        transaction_id: tx_id.into(),
        account: id(account),
        origin: origin.into(),
        counterparty: cp.map(id),
        timestamp: ts(at),
        quantity: q,
        capacity: 100.0,
        tx_type: ty,
        latency_ms: 17.0,
    }
}

fn features(tx: &TxView, history: &[TxView], peers: &[TxView]) -> BehaviorFeatures {
    compute_behavior_features(tx, history, peers, &SentinelPolicy::default(), &no_off_peak()).unwrap()
}

#[test]
fn empty_window_uses_defaults() {
    let tx = view("t", "a", "o", Some("b"), 100, 5.0, TxType::Buy);
    let f = features(&tx, &[], &[]);
    assert_eq!(f.volume_zscore, 0.0);
    assert_eq!(f.transaction_rate, 0.0);
    assert_eq!(f.origin_fanin, 1.0);
    assert_eq!(f.min_interarrival, 3600.0);
    assert_eq!(f.pair_discrepancy, 1.0);
    assert_eq!(f.pair_trade_count, 1.0);
}

#[test]
fn constant_volumes_give_zero_zscore() {
    let history: Vec<TxView> = (0..6).map(|i| view(&format!("h{i}"), "a", "o", None, i * 10, 7.5, TxType::Sell)).collect();
    let tx = view("t", "a", "o", None, 100, 7.5, TxType::Sell);
    let f = features(&tx, &history, &[]);
    assert_eq!(f.volume_zscore, 0.0);
    assert_eq!(f.volume_std, 0.0);
    assert_eq!(f.volume_mean, 7.5);
    assert_eq!(f.transaction_rate, 6.0);
    assert_eq!(f.min_interarrival, 10.0);
}

#[test]
fn window_excludes_old_history_and_current_volume() {
    let history = vec![
        view("old", "a", "o", None, -4000, 1000.0, TxType::Sell),
        view("h1", "a", "o", None, 0, 10.0, TxType::Sell),
        view("h2", "a", "o", None, 10, 20.0, TxType::Sell),
    ];
    let tx = view("t", "a", "o", None, 20, 30.0, TxType::Sell);
    let f = features(&tx, &history, &[]);
    assert_eq!(f.volume_mean, 15.0);
    assert_eq!(f.volume_std, 5.0);
    assert_eq!(f.volume_zscore, 3.0);
}

#[test]
fn sybil_cluster_shares_fanin() {
    let members = ["s1", "s2", "s3", "s4", "s5"];
    let all: Vec<TxView> = members.iter().enumerate().map(|(i, m)| view(&format!("x{i}"), m, "10.9.9.9", None, i as i64, 1.0, TxType::Buy)).collect();
    let mut tracker = Tracker::default();
    let mut fanins = Vec::new();
    for v in &all {
        fanins.push(tracker.observe(v.clone(), &SentinelPolicy::default(), &no_off_peak()).unwrap().origin_fanin);
    }
    assert_eq!(fanins, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    // A second round: every member now sees all five.
    for (i, m) in members.iter().enumerate() {
        let v = view(&format!("y{i}"), m, "10.9.9.9", None, 10 + i as i64, 1.0, TxType::Buy);
        assert_eq!(tracker.observe(v, &SentinelPolicy::default(), &no_off_peak()).unwrap().origin_fanin, 5.0);
    }
}

#[test]
fn unsorted_history_is_rejected() {
    let history = vec![view("h1", "a", "o", None, 10, 1.0, TxType::Sell), view("h2", "a", "o", None, 5, 1.0, TxType::Sell)];
    let tx = view("t", "a", "o", None, 20, 1.0, TxType::Sell);
    let err = compute_behavior_features(&tx, &history, &[], &SentinelPolicy::default(), &no_off_peak());
    assert!(matches!(err, Err(SentinelError::UnsortedHistory(_))));
    let future = vec![view("h", "a", "o", None, 30, 1.0, TxType::Sell)];
    let err = compute_behavior_features(&tx, &future, &[], &SentinelPolicy::default(), &no_off_peak());
    assert!(matches!(err, Err(SentinelError::UnsortedHistory(_))));
}

#[test]
fn offsetting_trades_look_like_a_wash() {
    let history = vec![
        view("h1", "a", "o", Some("b"), 0, 10.0, TxType::Sell),
        view("h2", "a", "o", Some("b"), 5, 10.0, TxType::Buy),
        view("h3", "a", "o", Some("b"), 10, 10.0, TxType::Sell),
    ];
    let tx = view("t", "a", "o", Some("b"), 15, 10.0, TxType::Buy);
    let f = features(&tx, &history, &[]);
    assert_eq!(f.pair_discrepancy, 0.0);
    assert_eq!(f.pair_trade_count, 4.0);
    let one_way = view("u", "a", "o", Some("c"), 15, 10.0, TxType::Buy);
    assert_eq!(features(&one_way, &history, &[]).pair_discrepancy, 1.0);
}

#[test]
fn off_peak_share_counts_current_transaction() {
    let off_peak = OffPeakHours {
        start: ts(0),
        offsets: BTreeSet::from([1]),
    };
    let history = vec![view("h", "a", "o", None, 3000, 1.0, TxType::Sell)];
    let tx = view("t", "a", "o", None, 3700, 1.0, TxType::Sell);
    let f = compute_behavior_features(&tx, &history, &[], &SentinelPolicy::default(), &off_peak).unwrap();
    assert_eq!(f.off_peak_share, 0.5);
}

fn arb_history() -> impl Strategy<Value = Vec<(i64, f64, u8, bool)>> {
    prop::collection::vec((0i64..5000, 0.001f64..500.0, 0u8..4, any::<bool>()), 0..30)
}

proptest! {
    #[test]
    fn features_respect_invariants(items in arb_history(), q in 0.001f64..500.0) {
        let mut items = items;
        items.sort_by_key(|i| i.0);
        let history: Vec<TxView> = items
            .iter()
            .enumerate()
            .map(|(k, (t, v, cp, buy))| {
                let cp = format!("c{cp}");
                let ty = if *buy { TxType::Buy } else { TxType::Sell };
                view(&format!("h{k}"), "a", "o", Some(&cp), *t, *v, ty)
            })
            .collect();
        let peers: Vec<TxView> = history.iter().enumerate().map(|(k, h)| TxView { account: id(&format!("p{}", k % 3)), ..h.clone() }).collect();
        let tx = view("t", "a", "o", Some("c1"), 5000, q, TxType::Buy);
        let f = features(&tx, &history, &peers);
        prop_assert!(f.values().iter().all(|v| v.is_finite()));
        prop_assert!(f.volume_std >= 0.0);
        prop_assert!((0.0..=1.0).contains(&f.pair_discrepancy));
        prop_assert!(f.origin_fanin >= 1.0);
        prop_assert!(f.min_interarrival >= 0.0);
    }

    #[test]
    fn tracker_matches_direct_computation(items in arb_history()) {
        let mut items = items;
        items.sort_by_key(|i| i.0);
        let views: Vec<TxView> = items
            .iter()
            .enumerate()
            .map(|(k, (t, v, who, _))| view(&format!("x{k}"), &format!("a{}", who % 2), "o", None, *t, *v, TxType::Sell))
            .collect();
        let policy = SentinelPolicy { window_secs: 600, ..SentinelPolicy::default() };
        let mut tracker = Tracker::default();
        for (k, v) in views.iter().enumerate() {
            let got = tracker.observe(v.clone(), &policy, &no_off_peak()).unwrap();
            let own: Vec<TxView> = views[..k].iter().filter(|h| h.account == v.account).cloned().collect();
            let want = compute_behavior_features(v, &own, &views[..k], &policy, &no_off_peak()).unwrap();
            prop_assert_eq!(got, want);
        }
    }
}

#[test]
fn policy_validation() {
    assert!(SentinelPolicy::default().validate().is_ok());
    for threshold in [0.0, 1.0, f64::NAN] {
        let p = SentinelPolicy { threshold, ..SentinelPolicy::default() };
        assert!(matches!(p.validate(), Err(SentinelError::InvalidPolicy(_))));
    }
    let p: SentinelPolicy = serde_json::from_str(r#"{"threshold": 0.7}"#).unwrap();
    assert_eq!(p.window_secs, 3600);
}

/// A detector whose fraud probability is the logistic of `bias` for every
/// transaction.
fn constant_detector(fx: &Fixture, bias: f64) -> Detector {
    let chain: Vec<_> = fx.ledger.chain_transactions().cloned().collect();
    let table: Vec<_> = (0..chain.len()).map(|_| features(&view("t", "a", "o", None, 0, 1.0, TxType::Buy), &[], &[])).collect();
    let labels: Vec<bool> = (0..chain.len()).map(|i| i % 2 == 0).collect();
    let mut d = Detector::fit(&chain, &table, &labels, &TrainConfig::logistic(0)).unwrap();
    let width = d.model.n_features();
    d.model = Model::Logistic(LinearModel {
        weights: Matrix::zeros(2, width),
        biases: vec![0.0, bias],
    });
    d
}

/// Fixture with some settled history, a detector and a sentinel.
fn setup(bias: f64) -> (Fixture, Sentinel) {
    let mut fx = Fixture::new(100);
    assert!(fx.mint("auth-a", "sup-1", mwh("50.000")).is_accept());
    assert!(fx.mint("auth-b", "sup-2", mwh("50.000")).is_accept());
    fx.ledger.commit_block().unwrap();
    let d = constant_detector(&fx, bias);
    let s = Sentinel::new(SentinelPolicy::default(), no_off_peak(), Some(d)).unwrap();
    (fx, s)
}

fn held_events(ledger: &Ledger) -> Vec<&LedgerEvent> {
    ledger.events().iter().filter(|e| e.kind == EventKind::TransactionHeld).collect()
}

#[test]
fn score_below_threshold_lets_settlement_finish() {
    let (mut fx, mut s) = setup(-5.0);
    let (v, sell, _) = fx.trade("sup-1", "cons-1", mwh("10.000"), money("35.00"));
    assert!(v.is_accept());
    fx.ledger.commit_block_with(&mut s).unwrap();
    assert!(s.first_error().is_none());
    assert!(s.alerts().is_empty());
    assert_eq!(s.scores().len(), 2);
    assert!(held_events(&fx.ledger).is_empty());
    assert_eq!(fx.ledger.phase(&sell), Some(TxPhase::Settled));
    assert_eq!(fx.tokens("cons-1"), mwh("10.000"));
}

#[test]
fn score_above_threshold_holds_the_transaction() {
    let (mut fx, mut s) = setup(5.0);
    let (_, sell, buy) = fx.trade("sup-1", "cons-1", mwh("10.000"), money("35.00"));
    fx.ledger.commit_block_with(&mut s).unwrap();
    assert!(s.first_error().is_none());
    let alerted: Vec<&str> = s.alerts().iter().map(|a| a.transaction_id.as_str()).collect();
    assert_eq!(alerted, vec![sell.as_str(), buy.as_str()]);
    assert!(s.alerts().iter().all(|a| a.state == AlertState::Open && a.score > 0.99));
    let held: Vec<&str> = held_events(&fx.ledger).iter().map(|e| e.transaction_id.as_str()).collect();
    assert_eq!(held, alerted);
    assert_eq!(fx.ledger.phase(&sell), Some(TxPhase::Held));
    assert_eq!(fx.tokens("cons-1"), Mwh::ZERO);
}

#[test]
fn release_matches_an_unheld_run() {
    let (mut held, mut s) = setup(5.0);
    let (plain, _) = setup(-5.0);
    let mut plain = plain;
    let (_, sell, buy) = held.trade("sup-1", "cons-1", mwh("10.000"), money("35.00"));
    plain.trade("sup-1", "cons-1", mwh("10.000"), money("35.00"));
    held.ledger.commit_block_with(&mut s).unwrap();
    plain.ledger.commit_block().unwrap();
    let first = s.adjudicate(&mut held.ledger, &sell, Decision::Release, ts(500)).unwrap();
    assert!(!first.settled);
    let second = s.adjudicate(&mut held.ledger, &buy, Decision::Release, ts(501)).unwrap();
    assert!(second.settled);
    assert!(s.alerts().iter().all(|a| a.state == AlertState::Released));
    for name in ["sup-1", "cons-1"] {
        assert_eq!(held.ledger.account(&id(name)), plain.ledger.account(&id(name)));
    }
    assert_eq!(s.adjudications().len(), 2);
}

#[test]
fn reject_reverts_and_never_moves_tokens() {
    let (mut fx, mut s) = setup(5.0);
    let before: Vec<_> = ["sup-1", "cons-1"].iter().map(|n| fx.ledger.account(&id(n)).unwrap().energy_tokens).collect();
    let (_, sell, buy) = fx.trade("sup-1", "cons-1", mwh("10.000"), money("35.00"));
    fx.ledger.commit_block_with(&mut s).unwrap();
    s.adjudicate(&mut fx.ledger, &sell, Decision::Reject, ts(500)).unwrap();
    assert!(s.alerts().iter().all(|a| a.state == AlertState::Rejected));
    let after: Vec<_> = ["sup-1", "cons-1"].iter().map(|n| fx.ledger.account(&id(n)).unwrap().energy_tokens).collect();
    assert_eq!(before, after);
    assert_eq!(fx.ledger.account(&id("sup-1")).unwrap().escrow, Mwh::ZERO);
    let rec = fx.ledger.chain_transactions().find(|t| t.transaction_id == buy).unwrap().clone();
    assert_eq!(fx.ledger.effective_status(&rec), TxStatus::Failed);
    assert_eq!(fx.ledger.phase(&buy), Some(TxPhase::Reverted));
    // Both legs were closed by the one rejection.
    let again = s.adjudicate(&mut fx.ledger, &buy, Decision::Release, ts(501));
    assert!(matches!(again, Err(SentinelError::AlertClosed(_))));
}

#[test]
fn double_adjudication_is_refused() {
    let (mut fx, mut s) = setup(5.0);
    let (_, sell, _) = fx.trade("sup-1", "cons-1", mwh("10.000"), money("35.00"));
    fx.ledger.commit_block_with(&mut s).unwrap();
    s.adjudicate(&mut fx.ledger, &sell, Decision::Release, ts(500)).unwrap();
    let again = s.adjudicate(&mut fx.ledger, &sell, Decision::Reject, ts(501));
    assert!(matches!(again, Err(SentinelError::AlertClosed(_))));
    let unknown = s.adjudicate(&mut fx.ledger, "nope", Decision::Reject, ts(501));
    assert!(matches!(unknown, Err(SentinelError::UnknownAlert(_))));
}

#[test]
fn missing_model_still_tracks_history() {
    let mut fx = Fixture::new(100);
    fx.mint("auth-a", "sup-1", mwh("5.000"));
    let mut s = Sentinel::new(SentinelPolicy::default(), no_off_peak(), None).unwrap();
    fx.ledger.commit_block_with(&mut s).unwrap();
    assert_eq!(s.first_error(), Some("no fraud model loaded"));
    assert_eq!(s.history().len(), 1);
    assert!(s.scores().is_empty());
}

#[test]
fn alerts_round_trip_as_json_lines() {
    let (mut fx, mut s) = setup(5.0);
    fx.trade("sup-1", "cons-1", mwh("10.000"), money("35.00"));
    fx.ledger.commit_block_with(&mut s).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, s.alerts()).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
    let back: Vec<Alert> = read_jsonl(&buf[..]).unwrap();
    assert_eq!(back, s.alerts());
}

fn burst(prefix: &str, accounts: &[&str], origin: impl Fn(usize) -> String, start: i64, step_ms: i64, n: usize) -> Vec<TxView> {
    (0..n)
        .map(|k| {
            let mut v = view(&format!("{prefix}{k}"), accounts[k % accounts.len()], &origin(k % accounts.len()), None, 0, 1.0, TxType::Buy);
            v.timestamp = ts(start) + chrono::Duration::milliseconds(k as i64 * step_ms);
            v
        })
        .collect()
}

#[test]
fn sybil_rule_thresholds() {
    let policy = SentinelPolicy::default();
    let five = ["s1", "s2", "s3", "s4", "s5"];
    let shared = burst("a", &five, |_| "10.1.1.1".into(), 0, 500, 12);
    let flagged = detect_sybil(&shared, &policy);
    assert_eq!(flagged.len(), 1);
    assert_eq!(flagged[0].origin, "10.1.1.1");
    assert_eq!(flagged[0].accounts, five.iter().map(|a| id(a)).collect::<Vec<AccountId>>());

    let distinct = burst("b", &five, |k| format!("10.2.2.{k}"), 0, 500, 12);
    assert!(detect_sybil(&distinct, &policy).is_empty());

    let four = burst("c", &five[..4], |_| "10.3.3.3".into(), 0, 500, 12);
    assert!(detect_sybil(&four, &policy).is_empty());

    let slow = burst("d", &five, |_| "10.4.4.4".into(), 0, 60_000, 12);
    assert!(detect_sybil(&slow, &policy).is_empty());
}

fn small_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig::diurnal(seed, 2000)
}

fn trained_detector(seed: u64) -> Detector {
    let run = generate(&small_scenario(seed)).unwrap();
    let table = behavior_table(&run.ledger, &SentinelPolicy::default(), &run.off_peak).unwrap();
    let (records, feats): (Vec<_>, Vec<_>) = table.into_iter().unzip();
    let labels: Vec<bool> = records.iter().map(|r| run.truth.is_fraud(&r.transaction_id)).collect();
    Detector::fit(&records, &feats, &labels, &TrainConfig::forest(3)).unwrap()
}

fn live_run(detector: Option<Detector>, cfg: &ScenarioConfig) -> (Sentinel, gridledger_core::simgen::SimOutput) {
    let mut s = Sentinel::new(SentinelPolicy::default(), OffPeakHours::from_config(cfg), detector).unwrap();
    let out = generate_with(cfg, &mut s).unwrap();
    (s, out)
}

#[test]
fn live_runs_are_deterministic_and_holds_match_alerts() {
    let d = trained_detector(100);
    let cfg = small_scenario(101);
    let (a, out_a) = live_run(Some(d.clone()), &cfg);
    let (b, _) = live_run(Some(d), &cfg);
    assert!(a.first_error().is_none());
    assert!(!a.alerts().is_empty());
    assert_eq!(a.alerts(), b.alerts());
    assert_eq!(a.scores(), b.scores());

    let held: Vec<&str> = held_events(&out_a.ledger).iter().map(|e| e.transaction_id.as_str()).collect();
    let alerted: Vec<&str> = a.alerts().iter().map(|x| x.transaction_id.as_str()).collect();
    assert_eq!(held, alerted);
    assert_eq!(held.iter().collect::<BTreeSet<_>>().len(), held.len());
}

#[test]
fn sybil_rule_ignores_the_model() {
    let cfg = small_scenario(102);
    let mut with_model = Sentinel::new(SentinelPolicy::default(), OffPeakHours::from_config(&cfg), Some(trained_detector(100))).unwrap();
    let mut without = Sentinel::new(SentinelPolicy::default(), OffPeakHours::from_config(&cfg), None).unwrap();
    let mut both = |l: &mut Ledger, e: &LedgerEvent| {
        use gridledger_core::ledger::EventListener;
        with_model.on_event(l, e);
        without.on_event(l, e);
    };
    let out = generate_with(&cfg, &mut both).unwrap();
    assert!(with_model.first_error().is_none());
    assert!(!with_model.alerts().is_empty());
    let a = detect_sybil(with_model.history(), &SentinelPolicy::default());
    let b = detect_sybil(without.history(), &SentinelPolicy::default());
    assert_eq!(a, b);
    let mut injected: Vec<Vec<AccountId>> = out.agents.sybil_clusters.clone();
    injected.iter_mut().for_each(|c| c.sort());
    injected.sort();
    let mut got: Vec<Vec<AccountId>> = a.into_iter().map(|c| c.accounts).collect();
    got.sort();
    assert_eq!(got, injected);
}

#[test]
fn default_scenario_flags_every_injected_cluster() {
    let out = generate(&ScenarioConfig::default()).unwrap();
    let history: Vec<TxView> = out
        .ledger
        .chain_transactions()
        .map(|tx| TxView::from_record(tx, out.ledger.account(&tx.account_id).unwrap()))
        .collect();
    let flagged = detect_sybil(&history, &SentinelPolicy::default());
    let mut injected: Vec<Vec<AccountId>> = out.agents.sybil_clusters.clone();
    injected.iter_mut().for_each(|c| c.sort());
    let mut got: Vec<Vec<AccountId>> = flagged.into_iter().map(|c| c.accounts).collect();
    got.sort();
    injected.sort();
    assert_eq!(got, injected);
}

/// Largest deviation, in benign standard deviations, of the kind's mean from
/// the benign mean over a set of statistics. A zero-variance baseline that
/// the kind departs from counts as infinitely far.
fn max_sigma(benign: &[Vec<f64>], kind: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..benign[0].len() {
        let b: Vec<f64> = benign.iter().map(|r| r[j]).collect();
        let k: Vec<f64> = kind.iter().map(|r| r[j]).collect();
        let d = (mean(&k) - mean(&b)).abs();
        let sd = std_dev(&b);
        let z = if sd > 0.0 { d / sd } else if d > 0.0 { f64::INFINITY } else { 0.0 };
        best = best.max(z);
    }
    best
}

#[test]
fn every_fraud_kind_departs_three_sigma() {
    let out = generate(&ScenarioConfig::default()).unwrap();
    let policy = SentinelPolicy::default();
    // Behaviour statistics over every submission in order, plus the two
    // verification statistics a signature or nonce forgery shows up in.
    let mut tracker = Tracker::default();
    let mut last_nonce: std::collections::BTreeMap<AccountId, u64> = Default::default();
    let mut by_kind: std::collections::BTreeMap<FraudKind, Vec<Vec<f64>>> = Default::default();
    for (tx, (_, kind)) in out.records.iter().zip(out.truth.entries()) {
        let acct = out.ledger.account(&tx.account_id).unwrap();
        let f = tracker.observe(TxView::from_record(tx, acct), &policy, &out.off_peak).unwrap();
        let signed = out.ledger.scheme().verify(&acct.signing_key, &gridledger_core::ledger::canonical_bytes(tx), &tx.signature);
        let prev = last_nonce.get(&tx.account_id).copied().unwrap_or(0);
        let advance = tx.nonce as f64 - prev as f64;
        if signed && advance > 0.0 {
            last_nonce.insert(tx.account_id.clone(), tx.nonce);
        }
        let mut row = f.values().to_vec();
        row.push(signed as u8 as f64);
        row.push((advance >= 1.0) as u8 as f64);
        by_kind.entry(*kind).or_default().push(row);
    }
    let benign = &by_kind[&FraudKind::None];
    for kind in FraudKind::INJECTED {
        let rows = &by_kind[&kind];
        assert!(!rows.is_empty(), "{kind} missing");
        let z = max_sigma(benign, rows);
        assert!(z >= 3.0, "{kind}: {z}");
    }
}

#[test]
fn zero_fraud_case_study_reports_undefined_recall() {
    let mut cfg = CaseStudyConfig::preset(CaseStudy::SupplierBurst, 5);
    cfg.scenario.fraud_rate = 0.0;
    cfg.scenario.n_transactions = 2000;
    let r = run_case_study_with(&cfg).unwrap();
    assert_eq!(r.live.positives, 0);
    assert_eq!(r.live.recall, None);
    assert!(r.notes.iter().any(|n| n.contains("recall is undefined")));
    assert!(r.to_string().contains("recall=undefined"));
}

#[test]
fn binary_metrics_by_hand() {
    let truth = [true, true, false, false, true];
    let scores = [0.9, 0.4, 0.6, 0.1, 0.8];
    let m = BinaryMetrics::from_scores(&truth, &scores, 0.5);
    assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (2, 1, 1));
    assert_eq!(m.precision, Some(2.0 / 3.0));
    assert_eq!(m.recall, Some(2.0 / 3.0));
    // Positive/negative pairs ranked correctly: 5 of 6.
    assert!((m.roc_auc.unwrap() - 5.0 / 6.0).abs() < 1e-12);
}
