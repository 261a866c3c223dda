//! Classification metrics, ROC-AUC and k-fold cross-validation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::numeric::{mean, std_dev};
use crate::rng::{shuffle, stream};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {label} is outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("scores contain a non-finite value")]
    NonFiniteScore,
    #[error("fold count {0} is below 2")]
    InvalidK(usize),
    #[error("class {class} has {count} row(s), fewer than k = {k}")]
    ClassTooSmallForK { class: usize, count: usize, k: usize },
}

fn check_labels(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<(), EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    if let Some(&label) = y_true.iter().chain(y_pred).find(|&&l| l >= k) {
        return Err(EvalError::LabelOutOfRange { label, classes: k });
    }
    Ok(())
}

/// `m[i][j]` counts rows with true class `i` predicted as `j`.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    check_labels(y_true, y_pred, k)?;
    let mut m = vec![vec![0; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> f64 {
    if y_true.is_empty() {
        return 0.0;
    }
    y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count() as f64 / y_true.len() as f64
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
}

impl ClassReport {
    /// Builds the averages from per-class rows.
    pub fn from_metrics(classes: Vec<ClassMetrics>, accuracy: f64) -> Self {
        let k = classes.len().max(1) as f64;
        let n: usize = classes.iter().map(|c| c.support).sum();
        let avg = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k;
        let wavg = |f: fn(&ClassMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / n as f64
            }
        };
        let macro_avg = Averages {
            precision: avg(|c| c.precision),
            recall: avg(|c| c.recall),
            f1: avg(|c| c.f1),
        };
        let weighted_avg = Averages {
            precision: wavg(|c| c.precision),
            recall: wavg(|c| c.recall),
            f1: wavg(|c| c.f1),
        };
        ClassReport {
            classes,
            accuracy,
            macro_avg,
            weighted_avg,
        }
    }

    pub fn support(&self) -> usize {
        self.classes.iter().map(|c| c.support).sum()
    }

    /// One row per class plus accuracy and the two averages, full precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["class", "precision", "recall", "f1-score", "support"])?;
        for c in &self.classes {
            out.write_record([
                c.name.clone(),
                c.precision.to_string(),
                c.recall.to_string(),
                c.f1.to_string(),
                c.support.to_string(),
            ])?;
        }
        let n = self.support().to_string();
        out.write_record(["accuracy", "", "", &self.accuracy.to_string(), &n])?;
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            out.write_record([
                name.to_string(),
                a.precision.to_string(),
                a.recall.to_string(),
                a.f1.to_string(),
                n.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Aligned text table at two decimals.
impl fmt::Display for ClassReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.classes.iter().map(|c| c.name.len()).max().unwrap_or(0).max("weighted avg".len());
        writeln!(f, "{:>width$}  {:>9} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score", "support")?;
        writeln!(f)?;
        for c in &self.classes {
            writeln!(
                f,
                "{:>width$}  {:>9.2} {:>9.2} {:>9.2} {:>9}",
                c.name, c.precision, c.recall, c.f1, c.support
            )?;
        }
        writeln!(f)?;
        let n = self.support();
        writeln!(f, "{:>width$}  {:>9} {:>9} {:>9.2} {:>9}", "accuracy", "", "", self.accuracy, n)?;
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            writeln!(
                f,
                "{:>width$}  {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, a.precision, a.recall, a.f1, n
            )?;
        }
        Ok(())
    }
}

pub fn classification_report<S: AsRef<str>>(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: &[S],
) -> Result<ClassReport, EvalError> {
    let k = class_names.len();
    let m = confusion_matrix(y_true, y_pred, k)?;
    let classes = (0..k)
        .map(|c| {
            let tp = m[c][c] as f64;
            let predicted: usize = (0..k).map(|i| m[i][c]).sum();
            let support: usize = m[c].iter().sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            ClassMetrics {
                name: class_names[c].as_ref().to_string(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        })
        .collect();
    let trace: usize = (0..k).map(|c| m[c][c]).sum();
    let acc = if y_true.is_empty() { 0.0 } else { trace as f64 / y_true.len() as f64 };
    Ok(ClassReport::from_metrics(classes, acc))
}

/// Binary ROC-AUC as the Mann-Whitney statistic with midranks for ties.
pub fn roc_auc(y_true: &[bool], scores: &[f64]) -> Result<f64, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            pred: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let pos = y_true.iter().filter(|&&y| y).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tie group i..=j shares their average.
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += midrank * order[i..=j].iter().filter(|&&r| y_true[r]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Unweighted mean of the one-vs-rest AUCs over every class column.
pub fn roc_auc_ovr_macro(y_true: &[usize], proba: &Matrix) -> Result<f64, EvalError> {
    if y_true.len() != proba.rows() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            pred: proba.rows(),
        });
    }
    let k = proba.cols();
    if let Some(&label) = y_true.iter().find(|&&l| l >= k) {
        return Err(EvalError::LabelOutOfRange { label, classes: k });
    }
    let mut total = 0.0;
    for c in 0..k {
        let y: Vec<bool> = y_true.iter().map(|&l| l == c).collect();
        total += roc_auc(&y, &proba.column(c))?;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CVConfig {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for CVConfig {
    fn default() -> Self {
        CVConfig {
            k: 5,
            seed: 0,
            stratified: true,
        }
    }
}

/// Validation folds as ascending index lists. Stratified folds deal each
/// shuffled class round-robin, continuing the rotation across classes, so
/// fold sizes and per-class counts differ by at most one.
pub fn kfold_indices(y: &[usize], config: &CVConfig) -> Result<Vec<Vec<usize>>, EvalError> {
    let k = config.k;
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    if config.stratified {
        for (i, &l) in y.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        if let Some((&class, idx)) = groups.iter().find(|(_, idx)| idx.len() < k) {
            return Err(EvalError::ClassTooSmallForK {
                class,
                count: idx.len(),
                k,
            });
        }
    } else {
        if y.len() < k {
            return Err(EvalError::ClassTooSmallForK {
                class: 0,
                count: y.len(),
                k,
            });
        }
        groups.insert(0, (0..y.len()).collect());
    }
    let mut rng = stream(config.seed, "kfold");
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for mut idx in groups.into_values() {
        shuffle(&mut idx, &mut rng);
        for i in idx {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<ClassReport>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_f1_macro: f64,
    pub std_f1_macro: f64,
}

/// Runs `trainer(train_x, train_y, valid_x)` on every fold; the trainer
/// returns predicted class indices for `valid_x`.
pub fn kfold_cv<S, F, E>(
    x: &Matrix,
    y: &[usize],
    class_names: &[S],
    config: &CVConfig,
    mut trainer: F,
) -> Result<CvSummary, E>
where
    S: AsRef<str>,
    F: FnMut(&Matrix, &[usize], &Matrix) -> Result<Vec<usize>, E>,
    E: From<EvalError>,
{
    if x.rows() != y.len() {
        return Err(EvalError::LengthMismatch {
            truth: y.len(),
            pred: x.rows(),
        }
        .into());
    }
    let folds = kfold_indices(y, config)?;
    let mut reports = Vec::with_capacity(folds.len());
    for valid in &folds {
        let mut in_valid = vec![false; y.len()];
        for &i in valid {
            in_valid[i] = true;
        }
        let train: Vec<usize> = (0..y.len()).filter(|&i| !in_valid[i]).collect();
        let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let vy: Vec<usize> = valid.iter().map(|&i| y[i]).collect();
        let pred = trainer(&x.select_rows(&train), &ty, &x.select_rows(valid))?;
        reports.push(classification_report(&vy, &pred, class_names)?);
    }
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let f1: Vec<f64> = reports.iter().map(|r| r.macro_avg.f1).collect();
    Ok(CvSummary {
        mean_accuracy: mean(&acc),
        std_accuracy: std_dev(&acc),
        mean_f1_macro: mean(&f1),
        std_f1_macro: std_dev(&f1),
        folds: reports,
    })
}

/// Model comparison rows, `model,accuracy`.
pub fn write_accuracy_csv<W: Write, S: AsRef<str>>(w: W, rows: &[(S, f64)]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "accuracy"])?;
    for (name, acc) in rows {
        out.write_record([name.as_ref(), &acc.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
