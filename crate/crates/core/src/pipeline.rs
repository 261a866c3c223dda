//! Preprocessing: calendar features, imputation, cost per unit, one-hot
//! encoding, standard scaling and the stratified split.
//!
//! Fitting only ever reads training rows. Identifiers and raw timestamps are
//! dropped; only the derived calendar fields enter the feature matrix.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRow;
use crate::ledger::{sha256, TxType};
use crate::matrix::Matrix;
use crate::numeric::apportion;
use crate::rng::{shuffle, stream};
use crate::time::{calendar_fields, parse_ts, Timestamp};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("unparsable timestamp {0:?}")]
    UnparsableTimestamp(String),
    #[error("every transaction_type value is missing")]
    AllMissing,
    #[error("class {label:?} has {count} row(s); stratification needs at least 2")]
    ClassTooSmall { label: String, count: usize },
    #[error("test fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("matrix is already transformed")]
    AlreadyTransformed,
    #[error("label {0:?} is not in the training vocabulary")]
    UnknownLabel(String),
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeFeatures {
    pub hour: u32,
    /// Monday = 0.
    pub day_of_week: u32,
    pub month: u32,
}

pub fn extract_time_features(ts: &Timestamp) -> TimeFeatures {
    let (hour, day_of_week, month) = calendar_fields(ts);
    TimeFeatures { hour, day_of_week, month }
}

/// [`extract_time_features`] on ISO-8601 text.
pub fn parse_time_features(text: &str) -> Result<TimeFeatures, PipelineError> {
    let ts = parse_ts(text).map_err(|e| PipelineError::UnparsableTimestamp(e.0))?;
    Ok(extract_time_features(&ts))
}

/// `total_cost / electricity_quantity`, or 0 when the quantity is 0.
pub fn compute_cost_per_unit(total_cost: f64, electricity_quantity: f64) -> f64 {
    if electricity_quantity == 0.0 {
        0.0
    } else {
        total_cost / electricity_quantity
    }
}

/// Most frequent `transaction_type`; ties go to the earlier of Buy, Sell, Unknown.
pub fn transaction_type_mode(rows: &[DatasetRow]) -> Result<TxType, PipelineError> {
    let mut counts = [0usize; 3];
    for t in rows.iter().filter_map(|r| r.transaction_type) {
        counts[t.index()] += 1;
    }
    let best = (0..3).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).expect("three types");
    if counts[best] == 0 {
        return Err(PipelineError::AllMissing);
    }
    Ok(TxType::ALL[best])
}

/// Fills missing types with the mode of `rows` themselves.
pub fn impute_transaction_type(rows: &[DatasetRow]) -> Result<Vec<DatasetRow>, PipelineError> {
    let mode = transaction_type_mode(rows)?;
    Ok(fill_type(rows, mode))
}

fn fill_type(rows: &[DatasetRow], mode: TxType) -> Vec<DatasetRow> {
    rows.iter()
        .map(|r| DatasetRow {
            transaction_type: Some(r.transaction_type.unwrap_or(mode)),
            ..r.clone()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    /// Row indices, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split of row indices by class label. The test side holds
/// exactly `round(n × test_fraction)` rows, apportioned across classes by
/// largest remainder.
pub fn stratified_split<L: Ord + Clone + std::fmt::Debug>(
    labels: &[L],
    test_fraction: f64,
    seed: u64,
) -> Result<Split, PipelineError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PipelineError::InvalidFraction(test_fraction));
    }
    let mut by_class: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.clone()).or_default().push(i);
    }
    if let Some((l, idx)) = by_class.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(PipelineError::ClassTooSmall {
            label: format!("{l:?}"),
            count: idx.len(),
        });
    }
    let total = (labels.len() as f64 * test_fraction).round() as usize;
    let sizes: Vec<f64> = by_class.values().map(|v| v.len() as f64).collect();
    let quotas = apportion(total, &sizes);
    let mut rng = stream(seed, "stratified-split");
    let mut train = Vec::with_capacity(labels.len() - total);
    let mut test = Vec::with_capacity(total);
    for (mut idx, quota) in by_class.into_values().zip(quotas) {
        shuffle(&mut idx, &mut rng);
        test.extend_from_slice(&idx[..quota]);
        train.extend_from_slice(&idx[quota..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub const NUMERIC_FEATURES: [&str; 6] = [
    "electricity_quantity",
    "price_per_mwh",
    "total_cost",
    "latency_ms",
    "cost_per_unit",
    "zt_authentication",
];

pub const CATEGORICAL_FEATURES: [&str; 8] = [
    "user_role",
    "transaction_type",
    "security_level",
    "encryption_method",
    "network_slice_id",
    "hour",
    "day_of_week",
    "month",
];

fn numeric_values(r: &DatasetRow) -> [f64; 6] {
    let q = r.electricity_quantity.to_f64();
    let c = r.total_cost.to_f64();
    [
        q,
        r.price_per_mwh.to_f64(),
        c,
        r.latency_ms,
        compute_cost_per_unit(c, q),
        r.zt_authentication as u8 as f64,
    ]
}

/// Categorical values of a row whose type has already been imputed.
fn categorical_values(r: &DatasetRow) -> [String; 8] {
    let t = extract_time_features(&r.timestamp);
    [
        r.user_role.to_string(),
        r.transaction_type.map(|t| t.to_string()).unwrap_or_default(),
        r.security_level.to_string(),
        r.encryption_method.clone(),
        r.network_slice_id.to_string(),
        t.hour.to_string(),
        t.day_of_week.to_string(),
        t.month.to_string(),
    ]
}

/// Numeric categories sort numerically, everything else lexically.
fn category_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Per-column standardisation fitted on training data. Constant columns are
/// centred but not divided.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mut means = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for (m, v) in means.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for ((s, v), m) in vars.iter_mut().zip(x.row(i)).zip(&means) {
                *s += (v - m).powi(2);
            }
        }
        let scales = vars
            .into_iter()
            .zip(&means)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Scaler { means, scales }
    }

    /// Scales the first `means.len()` columns of `x` in place.
    pub fn apply(&self, x: &mut Matrix) {
        for i in 0..x.rows() {
            for ((v, m), s) in x.row_mut(i).iter_mut().zip(&self.means).zip(&self.scales) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Where a feature column comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub source: String,
    /// Category value for one-hot columns.
    pub category: Option<String>,
}

/// Encoded features with optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub x: Matrix,
    /// Class indices into the preprocessor's label vocabulary; empty when unlabelled.
    pub y: Vec<usize>,
    pub columns: Vec<Column>,
    /// Numeric columns have been scaled.
    pub transformed: bool,
    /// Rows whose category was not in the training vocabulary, per field.
    pub unseen: BTreeMap<String, usize>,
}

impl FeatureMatrix {
    /// CSV with one header row of column names, then `label` if labelled.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = vec!["transaction_id"];
        header.extend(self.columns.iter().map(|c| c.name.as_str()));
        if !self.y.is_empty() {
            header.push("label");
        }
        wtr.write_record(&header)?;
        for i in 0..self.x.rows() {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            if let Some(y) = self.y.get(i) {
                rec.push(y.to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Everything learnt from the training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessor {
    pub type_mode: TxType,
    pub scaler: Scaler,
    /// Category vocabulary per field, in [`CATEGORICAL_FEATURES`] order.
    pub vocabularies: Vec<Vec<String>>,
    /// Class labels in index order.
    pub labels: Vec<String>,
}

impl FittedPreprocessor {
    /// Fits on training rows and their labels.
    pub fn fit<L: AsRef<str>>(rows: &[DatasetRow], labels: &[L]) -> Result<Self, PipelineError> {
        if rows.is_empty() {
            return Err(PipelineError::EmptyTrain);
        }
        if rows.len() != labels.len() {
            return Err(PipelineError::LengthMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let type_mode = transaction_type_mode(rows)?;
        let rows = fill_type(rows, type_mode);
        let numeric = Matrix::from_rows(&rows.iter().map(numeric_values).collect::<Vec<_>>());
        let scaler = Scaler::fit(&numeric);
        let mut sets: Vec<BTreeSet<String>> = vec![BTreeSet::new(); CATEGORICAL_FEATURES.len()];
        for r in &rows {
            for (set, v) in sets.iter_mut().zip(categorical_values(r)) {
                set.insert(v);
            }
        }
        let vocabularies = sets
            .into_iter()
            .map(|s| {
                let mut v: Vec<String> = s.into_iter().collect();
                v.sort_by(|a, b| category_order(a, b));
                v
            })
            .collect();
        let mut labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
        labels.sort();
        Ok(FittedPreprocessor {
            type_mode,
            scaler,
            vocabularies,
            labels,
        })
    }

    pub fn columns(&self) -> Vec<Column> {
        let mut out: Vec<Column> = NUMERIC_FEATURES
            .iter()
            .map(|n| Column {
                name: n.to_string(),
                source: n.to_string(),
                category: None,
            })
            .collect();
        for (field, vocab) in CATEGORICAL_FEATURES.iter().zip(&self.vocabularies) {
            for v in vocab {
                out.push(Column {
                    name: format!("{field}={v}"),
                    source: field.to_string(),
                    category: Some(v.clone()),
                });
            }
        }
        out
    }

    pub fn n_features(&self) -> usize {
        NUMERIC_FEATURES.len() + self.vocabularies.iter().map(Vec::len).sum::<usize>()
    }

    pub fn label_index(&self, label: &str) -> Result<usize, PipelineError> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .map_err(|_| PipelineError::UnknownLabel(label.to_string()))
    }

    /// Encodes rows without scaling.
    pub fn encode<L: AsRef<str>>(&self, rows: &[DatasetRow], labels: Option<&[L]>) -> Result<FeatureMatrix, PipelineError> {
        if let Some(l) = labels {
            if l.len() != rows.len() {
                return Err(PipelineError::LengthMismatch {
                    rows: rows.len(),
                    labels: l.len(),
                });
            }
        }
        let rows = fill_type(rows, self.type_mode);
        let width = self.n_features();
        let mut x = Matrix::zeros(rows.len(), width);
        let mut unseen = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            let out = x.row_mut(i);
            out[..NUMERIC_FEATURES.len()].copy_from_slice(&numeric_values(r));
            let mut base = NUMERIC_FEATURES.len();
            for ((field, vocab), v) in CATEGORICAL_FEATURES.iter().zip(&self.vocabularies).zip(categorical_values(r)) {
                match vocab.binary_search_by(|c| category_order(c, &v)) {
                    Ok(k) => out[base + k] = 1.0,
                    Err(_) => *unseen.entry(field.to_string()).or_insert(0) += 1,
                }
                base += vocab.len();
            }
        }
        let y = match labels {
            Some(ls) => ls.iter().map(|l| self.label_index(l.as_ref())).collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(FeatureMatrix {
            ids: rows.iter().map(|r| r.transaction_id.clone()).collect(),
            x,
            y,
            columns: self.columns(),
            transformed: false,
            unseen,
        })
    }

    /// Scales the numeric block of an encoded matrix.
    pub fn scale(&self, m: &mut FeatureMatrix) -> Result<(), PipelineError> {
        if m.transformed {
            return Err(PipelineError::AlreadyTransformed);
        }
        self.scaler.apply(&mut m.x);
        m.transformed = true;
        Ok(())
    }

    pub fn transform<L: AsRef<str>>(&self, rows: &[DatasetRow], labels: Option<&[L]>) -> Result<FeatureMatrix, PipelineError> {
        let mut m = self.encode(rows, labels)?;
        self.scale(&mut m)?;
        Ok(m)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn manifest_hash(&self) -> String {
        hex::encode(sha256(serde_json::to_string(self).expect("serializable").as_bytes()))
    }
}

/// Fits on `rows` and returns the transformed training matrix.
pub fn fit_transform<L: AsRef<str>>(
    rows: &[DatasetRow],
    labels: &[L],
) -> Result<(FittedPreprocessor, FeatureMatrix), PipelineError> {
    let prep = FittedPreprocessor::fit(rows, labels)?;
    let m = prep.transform(rows, Some(labels))?;
    Ok((prep, m))
}
