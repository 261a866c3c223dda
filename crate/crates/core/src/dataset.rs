//! The thirteen-column transaction dataset and its CSV form.

use std::io::{Read, Write};

use crate::fixed::{Money, Mwh};
use crate::ledger::{NetworkSlice, Role, SecurityLevel, TransactionRecord, TxStatus, TxType};
use crate::time::{format_ts, parse_ts, Timestamp};

pub const CSV_HEADER: [&str; 13] = [
    "transaction_id",
    "timestamp",
    "user_role",
    "transaction_type",
    "electricity_quantity",
    "price_per_mwh",
    "total_cost",
    "latency_ms",
    "security_level",
    "encryption_method",
    "zt_authentication",
    "network_slice_id",
    "transaction_status",
];

pub const TRUTH_HEADER: [&str; 2] = ["transaction_id", "fraud_kind"];

/// One dataset row. `transaction_type` may be missing in imported data.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRow {
    pub transaction_id: String,
    pub timestamp: Timestamp,
    pub user_role: Role,
    pub transaction_type: Option<TxType>,
    pub electricity_quantity: Mwh,
    pub price_per_mwh: Money,
    pub total_cost: Money,
    pub latency_ms: f64,
    pub security_level: SecurityLevel,
    pub encryption_method: String,
    pub zt_authentication: bool,
    pub network_slice_id: NetworkSlice,
    pub transaction_status: TxStatus,
}

impl DatasetRow {
    /// The dataset view of a record, with `status` in place of the recorded one.
    pub fn from_record(tx: &TransactionRecord, status: TxStatus) -> Self {
        DatasetRow {
            transaction_id: tx.transaction_id.clone(),
            timestamp: tx.timestamp,
            user_role: tx.user_role,
            transaction_type: Some(tx.transaction_type),
            electricity_quantity: tx.electricity_quantity,
            price_per_mwh: tx.price_per_mwh,
            total_cost: tx.total_cost,
            latency_ms: tx.latency_ms,
            security_level: tx.security_level,
            encryption_method: tx.encryption_method.clone(),
            zt_authentication: tx.zt_authentication,
            network_slice_id: tx.network_slice_id,
            transaction_status: status,
        }
    }

    /// Field texts in [`CSV_HEADER`] order.
    pub fn to_fields(&self) -> [String; 13] {
        [
            self.transaction_id.clone(),
            format_ts(&self.timestamp),
            self.user_role.to_string(),
            self.transaction_type.map(|t| t.to_string()).unwrap_or_default(),
            self.electricity_quantity.to_string(),
            self.price_per_mwh.to_string(),
            self.total_cost.to_string(),
            self.latency_ms.to_string(),
            self.security_level.to_string(),
            self.encryption_method.clone(),
            if self.zt_authentication { "1" } else { "0" }.to_string(),
            self.network_slice_id.to_string(),
            self.transaction_status.to_string(),
        ]
    }

    /// Parses fields in [`CSV_HEADER`] order; `line` is used in errors.
    pub fn from_fields(rec: &csv::StringRecord, line: u64) -> Result<Self, DatasetError> {
        let bad = |column: &'static str, value: &str| DatasetError::Field {
            line,
            column,
            value: value.to_string(),
        };
        if rec.len() != CSV_HEADER.len() {
            return Err(DatasetError::Width { line, found: rec.len() });
        }
        macro_rules! parse {
            ($i:expr) => {
                rec[$i].parse().map_err(|_| bad(CSV_HEADER[$i], &rec[$i]))?
            };
        }
        let latency_ms: f64 = parse!(7);
        if !latency_ms.is_finite() {
            return Err(bad("latency_ms", &rec[7]));
        }
        Ok(DatasetRow {
            transaction_id: rec[0].to_string(),
            timestamp: parse_ts(&rec[1]).map_err(|_| bad("timestamp", &rec[1]))?,
            user_role: parse!(2),
            transaction_type: if rec[3].is_empty() { None } else { Some(parse!(3)) },
            electricity_quantity: parse!(4),
            price_per_mwh: parse!(5),
            total_cost: parse!(6),
            latency_ms,
            security_level: parse!(8),
            encryption_method: rec[9].to_string(),
            zt_authentication: match &rec[10] {
                "0" => false,
                "1" => true,
                other => return Err(bad("zt_authentication", other)),
            },
            network_slice_id: parse!(11),
            transaction_status: parse!(12),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("line {line}: expected 13 fields, found {found}")]
    Width { line: u64, found: usize },
    #[error("line {line}: invalid {column} value {value:?}")]
    Field {
        line: u64,
        column: &'static str,
        value: String,
    },
}

pub fn write_csv<W: Write>(w: W, rows: &[DatasetRow]) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    for r in rows {
        wtr.write_record(r.to_fields())?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(DatasetError::Header(header.iter().map(str::to_string).collect()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        rows.push(DatasetRow::from_fields(&rec?, i as u64 + 2)?);
    }
    Ok(rows)
}

/// Writes `transaction_id,fraud_kind` pairs.
pub fn write_truth<W: Write, K: std::fmt::Display>(w: W, truth: &[(String, K)]) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRUTH_HEADER)?;
    for (id, kind) in truth {
        wtr.write_record([id.as_str(), &kind.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_truth<R: Read, K: std::str::FromStr>(r: R) -> Result<Vec<(String, K)>, DatasetError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRUTH_HEADER.iter().copied()) {
        return Err(DatasetError::Header(header.iter().map(str::to_string).collect()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        if rec.len() != 2 {
            return Err(DatasetError::Width { line, found: rec.len() });
        }
        let kind = rec[1].parse().map_err(|_| DatasetError::Field {
            line,
            column: "fraud_kind",
            value: rec[1].to_string(),
        })?;
        out.push((rec[0].to_string(), kind));
    }
    Ok(out)
}
