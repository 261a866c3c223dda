use gridledger_core::eval::*;
use gridledger_core::Matrix;
use proptest::prelude::*;

fn naive_report(t: &[usize], p: &[usize], k: usize) -> Vec<(f64, f64, f64, usize)> {
    (0..k)
        .map(|c| {
            let mut tp = 0;
            let mut pred = 0;
            let mut sup = 0;
            for i in 0..t.len() {
                if t[i] == c && p[i] == c {
                    tp += 1;
                }
                if p[i] == c {
                    pred += 1;
                }
                if t[i] == c {
                    sup += 1;
                }
            }
            let pr = if pred == 0 { 0.0 } else { tp as f64 / pred as f64 };
            let re = if sup == 0 { 0.0 } else { tp as f64 / sup as f64 };
            let f1 = if pr + re == 0.0 { 0.0 } else { 2.0 * pr * re / (pr + re) };
            (pr, re, f1, sup)
        })
        .collect()
}

fn naive_auc(y: &[bool], s: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn confusion_examples() {
    assert_eq!(
        confusion_matrix(&[0, 0, 1, 2], &[0, 1, 1, 0], 3).unwrap(),
        vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 0]]
    );
    assert_eq!(
        confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap(),
        vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]
    );
    assert!(matches!(confusion_matrix(&[0], &[0, 1], 2), Err(EvalError::LengthMismatch { .. })));
    assert_eq!(
        confusion_matrix(&[0, 3], &[0, 1], 3),
        Err(EvalError::LabelOutOfRange { label: 3, classes: 3 })
    );
}

#[test]
fn f1_examples() {
    let (p, r) = (0.93, 0.88);
    let oracle = 1.0 / ((1.0 / p + 1.0 / r) / 2.0);
    assert!((f1_score(p, r) - oracle).abs() <= 1e-12);
    assert!((f1_score(p, r) - 0.904309).abs() <= 1e-5);
    assert!((f1_score(0.4, 0.4) - 0.4).abs() < 1e-15);
    assert_eq!(f1_score(0.0, 0.0), 0.0);
}

#[test]
fn published_table_averages_round_to_0_34() {
    let rows = [("Failed", 0.34, 843), ("Pending", 0.34, 825), ("Success", 0.33, 832)]
        .into_iter()
        .map(|(name, f1, support)| ClassMetrics {
            name: name.into(),
            precision: f1,
            recall: f1,
            f1,
            support,
        })
        .collect();
    let r = ClassReport::from_metrics(rows, 0.3368);
    assert_eq!(format!("{:.2}", r.macro_avg.f1), "0.34");
    assert_eq!(format!("{:.2}", r.weighted_avg.f1), "0.34");
    assert_eq!(r.support(), 2500);
}

#[test]
fn report_renders_the_table_layout() {
    let r = classification_report(&[0, 1, 2, 2], &[0, 1, 1, 2], &["Failed", "Pending", "Success"]).unwrap();
    let text = r.to_string();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), ["precision", "recall", "f1-score", "support"]);
    assert_eq!(lines[3].split_whitespace().collect::<Vec<_>>(), ["Pending", "0.50", "1.00", "0.67", "1"]);
    assert_eq!(lines[6].split_whitespace().collect::<Vec<_>>(), ["accuracy", "0.75", "4"]);
    assert!(lines[7].trim_start().starts_with("macro avg"));
    assert!(lines[8].starts_with("weighted avg"));
    let width = lines[0].len();
    assert!(lines.iter().filter(|l| !l.is_empty()).all(|l| l.len() == width));

    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let csv = String::from_utf8(buf).unwrap();
    assert_eq!(csv.lines().next(), Some("class,precision,recall,f1-score,support"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn auc_examples() {
    assert_eq!(roc_auc(&[true, false, true, false], &[0.9, 0.8, 0.4, 0.2]).unwrap(), 0.75);
    assert_eq!(roc_auc(&[false, false, true, true], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[false, true, true, false], &[0.5; 4]).unwrap(), 0.5);
    assert_eq!(roc_auc(&[true, true], &[0.1, 0.2]), Err(EvalError::SingleClass));
    assert_eq!(roc_auc(&[true, false], &[f64::NAN, 0.2]), Err(EvalError::NonFiniteScore));
}

#[test]
fn ovr_auc_averages_per_class_columns() {
    let proba = Matrix::from_rows(&[[0.8, 0.1, 0.1], [0.2, 0.7, 0.1], [0.3, 0.3, 0.4], [0.5, 0.4, 0.1]]);
    let y = [0, 1, 2, 1];
    let expected = (0..3)
        .map(|c| {
            let yb: Vec<bool> = y.iter().map(|&l| l == c).collect();
            naive_auc(&yb, &proba.column(c))
        })
        .sum::<f64>()
        / 3.0;
    assert!((roc_auc_ovr_macro(&y, &proba).unwrap() - expected).abs() < 1e-15);
}

proptest! {
    #[test]
    fn metrics_match_naive_loops(
        pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..40),
    ) {
        let t: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let r = classification_report(&t, &p, &["a", "b", "c"]).unwrap();
        for (c, (pr, re, f1, sup)) in naive_report(&t, &p, 3).into_iter().enumerate() {
            prop_assert_eq!(r.classes[c].precision, pr);
            prop_assert_eq!(r.classes[c].recall, re);
            prop_assert_eq!(r.classes[c].f1, f1);
            prop_assert_eq!(r.classes[c].support, sup);
        }
        let trace = t.iter().zip(&p).filter(|(a, b)| a == b).count();
        prop_assert_eq!(r.accuracy, trace as f64 / t.len() as f64);
        prop_assert_eq!(r.support(), t.len());
        let n = t.len() as f64;
        let w: f64 = r.classes.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / n;
        prop_assert!((r.weighted_avg.f1 - w).abs() <= 1e-9);
        for m in [r.macro_avg, r.weighted_avg] {
            for v in [m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn auc_matches_pair_count_and_is_rank_invariant(
        rows in proptest::collection::vec((any::<bool>(), 0u8..6), 2..40),
    ) {
        let y: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.1 as f64 / 5.0).collect();
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            prop_assert_eq!(roc_auc(&y, &s), Err(EvalError::SingleClass));
            return Ok(());
        }
        let auc = roc_auc(&y, &s).unwrap();
        prop_assert_eq!(auc, naive_auc(&y, &s));
        let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&y, &warped).unwrap(), auc);
    }

    #[test]
    fn stratified_folds_partition_rows(
        counts in proptest::collection::vec(5usize..30, 1..4),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let y: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let cfg = CVConfig { k, seed, stratified: true };
        let folds = kfold_indices(&y, &cfg).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for c in 0..counts.len() {
            let per: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| y[i] == c).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(kfold_indices(&y, &cfg).unwrap(), folds);
    }
}

#[test]
fn two_folds_over_four_balanced_rows() {
    let folds = kfold_indices(&[0, 0, 1, 1], &CVConfig { k: 2, seed: 3, stratified: true }).unwrap();
    for f in &folds {
        assert_eq!(f.len(), 2);
        assert_eq!(f.iter().filter(|&&i| i < 2).count(), 1);
    }
}

#[test]
fn fold_validation_errors() {
    let cfg = CVConfig { k: 3, seed: 0, stratified: true };
    assert_eq!(
        kfold_indices(&[0, 0, 0, 1, 1], &cfg),
        Err(EvalError::ClassTooSmallForK { class: 1, count: 2, k: 3 })
    );
    assert_eq!(kfold_indices(&[0, 1], &CVConfig { k: 1, ..cfg }), Err(EvalError::InvalidK(1)));
    let plain = kfold_indices(&[0, 0, 0, 1, 1], &CVConfig { stratified: false, ..cfg }).unwrap();
    assert_eq!(plain.concat().len(), 5);
}

#[test]
fn constant_trainer_scores_the_majority_share() {
    let y: Vec<usize> = [vec![0; 30], vec![1; 15], vec![2; 5]].concat();
    let x = Matrix::zeros(y.len(), 1);
    let cfg = CVConfig { k: 5, seed: 9, stratified: true };
    let summary = kfold_cv(&x, &y, &["a", "b", "c"], &cfg, |_, _, valid| {
        Ok::<_, EvalError>(vec![0; valid.rows()])
    })
    .unwrap();
    assert_eq!(summary.folds.len(), 5);
    for r in &summary.folds {
        assert_eq!(r.accuracy, 0.6);
    }
    assert_eq!(summary.mean_accuracy, 0.6);
    assert_eq!(summary.std_accuracy, 0.0);
}

#[test]
fn accuracy_csv_rows() {
    let mut buf = Vec::new();
    write_accuracy_csv(&mut buf, &[("logreg", 0.3368), ("forest", 0.3224)]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "model,accuracy\nlogreg,0.3368\nforest,0.3224\n");
}
