//! Figure aggregates computed from an exported dataset CSV alone.

use std::collections::BTreeMap;
use std::path::Path;

use gridledger_core::dataset::{DatasetRow, CSV_HEADER};
use gridledger_core::ledger::{NetworkSlice, Role, SecurityLevel, TxStatus, TxType};
use gridledger_core::numeric::pearson;
use gridledger_core::pipeline::{compute_cost_per_unit, extract_time_features};

use crate::svg;

#[derive(Debug, thiserror::Error)]
pub enum FigureError {
    #[error("dataset is missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The numeric fields of the correlation figure, in display order.
pub const CORRELATION_FIELDS: [&str; 6] = [
    "electricity_quantity",
    "price_per_mwh",
    "total_cost",
    "latency_ms",
    "zt_authentication",
    "cost_per_unit",
];

const WEEKDAYS: [&str; 7] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];

/// One figure's table: `header` names the columns of every row.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureAggregate {
    pub id: &'static str,
    /// Output file name without extension.
    pub stem: &'static str,
    pub title: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub svg: Option<String>,
}

impl FigureAggregate {
    /// Numeric value in the row whose first cell is `key`.
    pub fn value(&self, key: &str, column: &str) -> Option<f64> {
        let c = self.header.iter().position(|h| h == column)?;
        let row = self.rows.iter().find(|r| r[0] == key)?;
        row[c].parse().ok()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Reads a dataset CSV whose header holds every dataset column in any
/// order.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRow>, FigureError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let missing: Vec<String> = CSV_HEADER
        .iter()
        .filter(|c| !header.iter().any(|h| h == **c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(FigureError::MissingColumns(missing));
    }
    let order: Vec<usize> = CSV_HEADER
        .iter()
        .map(|c| header.iter().position(|h| h == *c).expect("checked above"))
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let fields: csv::StringRecord = order.iter().map(|&k| rec.get(k).unwrap_or("")).collect();
        let line = i as u64 + 2;
        rows.push(DatasetRow::from_fields(&fields, line).map_err(|e| FigureError::Row {
            line,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn five_numbers(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&v, p)))
}

fn strings<T: ToString>(xs: &[T]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}

fn quantile_header(first: &[&str]) -> Vec<String> {
    first.iter().chain(&["n", "min", "q1", "median", "q3", "max"]).map(|s| s.to_string()).collect()
}

fn quantile_row(keys: &[String], values: &[f64]) -> Vec<String> {
    let mut row = keys.to_vec();
    row.push(values.len().to_string());
    match five_numbers(values) {
        Some(q) => row.extend(q.iter().map(|v| v.to_string())),
        None => row.extend(std::iter::repeat_n(String::new(), 5)),
    }
    row
}

fn count_matrix(rows: &[String], cols: &[String], counts: &[Vec<usize>], corner: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec![corner.to_string()];
    header.extend(cols.iter().cloned());
    let body = rows
        .iter()
        .zip(counts)
        .map(|(name, c)| std::iter::once(name.clone()).chain(c.iter().map(|v| v.to_string())).collect())
        .collect();
    (header, body)
}

fn as_f64(counts: &[Vec<usize>]) -> Vec<Vec<f64>> {
    counts.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

fn hourly_volume(rows: &[DatasetRow]) -> FigureAggregate {
    let mut counts = [0usize; 24];
    for r in rows {
        counts[extract_time_features(&r.timestamp).hour as usize] += 1;
    }
    let labels: Vec<String> = (0..24).map(|h| h.to_string()).collect();
    FigureAggregate {
        id: "F1",
        stem: "f1_hourly_volume",
        title: "Transaction volume per hour",
        header: strings(&["hour", "count"]),
        rows: labels.iter().zip(counts).map(|(h, c)| vec![h.clone(), c.to_string()]).collect(),
        svg: Some(svg::line_chart(
            "Transaction volume per hour",
            &labels,
            &counts.map(|c| c as f64),
        )),
    }
}

fn latency_by_security(rows: &[DatasetRow]) -> FigureAggregate {
    let mut groups: BTreeMap<(SecurityLevel, TxStatus), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.security_level, r.transaction_status)).or_default().push(r.latency_ms);
    }
    let mut body = Vec::new();
    let mut boxes = Vec::new();
    for level in SecurityLevel::ALL {
        for status in TxStatus::ALL {
            let v = groups.get(&(*level, *status)).map(Vec::as_slice).unwrap_or(&[]);
            body.push(quantile_row(&[level.to_string(), status.to_string()], v));
            if let Some(q) = five_numbers(v) {
                boxes.push((format!("{level}/{status}"), q));
            }
        }
    }
    FigureAggregate {
        id: "F2",
        stem: "f2_latency_by_security",
        title: "Latency by security level and status",
        header: quantile_header(&["security_level", "transaction_status"]),
        rows: body,
        svg: Some(svg::box_summary("Latency (ms) by security level and status", &boxes)),
    }
}

fn role_by_type(rows: &[DatasetRow]) -> FigureAggregate {
    let cols = vec!["Buy".to_string(), "Sell".to_string(), "Unknown".to_string(), "missing".to_string()];
    let mut counts = vec![vec![0usize; cols.len()]; Role::ALL.len()];
    for r in rows {
        let c = match r.transaction_type {
            Some(TxType::Buy) => 0,
            Some(TxType::Sell) => 1,
            Some(TxType::Unknown) => 2,
            None => 3,
        };
        counts[r.user_role.index()][c] += 1;
    }
    let names = strings(Role::ALL);
    let (header, body) = count_matrix(&names, &cols, &counts, "user_role");
    FigureAggregate {
        id: "F3",
        stem: "f3_role_type",
        title: "Transaction types across user roles",
        header,
        rows: body,
        svg: Some(svg::heat_grid("Transaction types across user roles", &names, &cols, &as_f64(&counts), 0)),
    }
}

fn price_by_weekday(rows: &[DatasetRow]) -> FigureAggregate {
    let mut days: Vec<Vec<f64>> = vec![Vec::new(); 7];
    for r in rows {
        days[extract_time_features(&r.timestamp).day_of_week as usize].push(r.price_per_mwh.to_f64());
    }
    FigureAggregate {
        id: "F5",
        stem: "f5_price_by_weekday",
        title: "Price per MWh by weekday",
        header: quantile_header(&["day_of_week"]),
        rows: WEEKDAYS.iter().zip(&days).map(|(d, v)| quantile_row(&[d.to_string()], v)).collect(),
        svg: None,
    }
}

fn hour_by_role(rows: &[DatasetRow]) -> FigureAggregate {
    let mut counts = vec![vec![0usize; Role::ALL.len()]; 24];
    for r in rows {
        counts[extract_time_features(&r.timestamp).hour as usize][r.user_role.index()] += 1;
    }
    let hours: Vec<String> = (0..24).map(|h| h.to_string()).collect();
    let roles = strings(Role::ALL);
    let (header, body) = count_matrix(&hours, &roles, &counts, "hour");
    FigureAggregate {
        id: "F6",
        stem: "f6_hour_role",
        title: "Transactions by hour and user role",
        header,
        rows: body,
        svg: Some(svg::heat_grid("Transactions by hour and user role", &hours, &roles, &as_f64(&counts), 0)),
    }
}

fn numeric_columns(rows: &[DatasetRow]) -> [Vec<f64>; 6] {
    let mut cols: [Vec<f64>; 6] = Default::default();
    for r in rows {
        let q = r.electricity_quantity.to_f64();
        let c = r.total_cost.to_f64();
        let vals = [
            q,
            r.price_per_mwh.to_f64(),
            c,
            r.latency_ms,
            r.zt_authentication as u8 as f64,
            compute_cost_per_unit(c, q),
        ];
        for (col, v) in cols.iter_mut().zip(vals) {
            col.push(v);
        }
    }
    cols
}

fn correlation(rows: &[DatasetRow]) -> FigureAggregate {
    let cols = numeric_columns(rows);
    let m: Vec<Vec<f64>> = cols.iter().map(|a| cols.iter().map(|b| pearson(a, b)).collect()).collect();
    let names = strings(&CORRELATION_FIELDS);
    let mut header = vec!["field".to_string()];
    header.extend(names.iter().cloned());
    FigureAggregate {
        id: "F7",
        stem: "f7_correlation",
        title: "Correlation of market and security variables",
        header,
        rows: names
            .iter()
            .zip(&m)
            .map(|(n, r)| std::iter::once(n.clone()).chain(r.iter().map(|v| v.to_string())).collect())
            .collect(),
        svg: Some(svg::heat_grid("Correlation of market and security variables", &names, &names, &m, 2)),
    }
}

fn status_by_slice(rows: &[DatasetRow]) -> FigureAggregate {
    let mut counts = vec![vec![0usize; TxStatus::ALL.len()]; NetworkSlice::ALL.len()];
    for r in rows {
        counts[r.network_slice_id.index()][r.transaction_status.index()] += 1;
    }
    let slices = strings(NetworkSlice::ALL);
    let statuses = strings(TxStatus::ALL);
    let (header, body) = count_matrix(&slices, &statuses, &counts, "network_slice_id");
    FigureAggregate {
        id: "F8",
        stem: "f8_status_by_slice",
        title: "Transaction status by network slice",
        header,
        rows: body,
        svg: Some(svg::stacked_bars("Transaction status by network slice", &slices, &statuses, &as_f64(&counts))),
    }
}

fn points(id: &'static str, stem: &'static str, title: &'static str, header: &[&str], rows: Vec<Vec<String>>) -> FigureAggregate {
    FigureAggregate {
        id,
        stem,
        title,
        header: strings(header),
        rows,
        svg: None,
    }
}

/// Cost per unit above this is flagged `is_anomaly_price`.
pub fn anomaly_price_threshold(rows: &[DatasetRow]) -> f64 {
    let mut v: Vec<f64> = rows.iter().map(cost_per_unit).collect();
    if v.is_empty() {
        return f64::INFINITY;
    }
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.99)
}

fn cost_per_unit(r: &DatasetRow) -> f64 {
    compute_cost_per_unit(r.total_cost.to_f64(), r.electricity_quantity.to_f64())
}

fn point_figures(rows: &[DatasetRow]) -> [FigureAggregate; 3] {
    let cpu = cost_per_unit;
    let threshold = anomaly_price_threshold(rows);
    [
        points(
            "Fig9",
            "fig9_latency_security",
            "Latency by security level and status",
            &["transaction_id", "security_level", "latency_ms", "transaction_status"],
            rows.iter()
                .map(|r| vec![r.transaction_id.clone(), r.security_level.to_string(), r.latency_ms.to_string(), r.transaction_status.to_string()])
                .collect(),
        ),
        points(
            "Fig10",
            "fig10_cost_latency_auth",
            "Cost per unit, latency and authentication",
            &[
                "transaction_id",
                "cost_per_unit",
                "latency_ms",
                "zt_authentication",
                "transaction_status",
                "security_level",
                "is_anomaly_price",
            ],
            rows.iter()
                .map(|r| {
                    vec![
                        r.transaction_id.clone(),
                        cpu(r).to_string(),
                        r.latency_ms.to_string(),
                        r.zt_authentication.to_string(),
                        r.transaction_status.to_string(),
                        r.security_level.to_string(),
                        (cpu(r) > threshold).to_string(),
                    ]
                })
                .collect(),
        ),
        points(
            "Fig11",
            "fig11_price_quantity",
            "Price against quantity sized by cost",
            &["transaction_id", "electricity_quantity", "price_per_mwh", "total_cost", "security_level", "transaction_status"],
            rows.iter()
                .map(|r| {
                    vec![
                        r.transaction_id.clone(),
                        r.electricity_quantity.to_string(),
                        r.price_per_mwh.to_string(),
                        r.total_cost.to_string(),
                        r.security_level.to_string(),
                        r.transaction_status.to_string(),
                    ]
                })
                .collect(),
        ),
    ]
}

/// Every figure aggregate of `rows`.
pub fn aggregates(rows: &[DatasetRow]) -> Vec<FigureAggregate> {
    let mut out = vec![
        hourly_volume(rows),
        latency_by_security(rows),
        role_by_type(rows),
        price_by_weekday(rows),
        hour_by_role(rows),
        correlation(rows),
        status_by_slice(rows),
    ];
    out.extend(point_figures(rows));
    out
}

/// Reads `dataset` and writes `<stem>.csv`, plus `<stem>.svg` where the figure
/// has one, into `out_dir`. Returns the aggregates and the written paths.
pub fn emit_figures(dataset: &Path, out_dir: &Path) -> Result<(Vec<FigureAggregate>, Vec<std::path::PathBuf>), FigureError> {
    let rows = read_dataset(dataset)?;
    std::fs::create_dir_all(out_dir)?;
    let figs = aggregates(&rows);
    let mut written = Vec::new();
    for f in &figs {
        let csv_path = out_dir.join(format!("{}.csv", f.stem));
        std::fs::write(&csv_path, f.to_csv()?)?;
        written.push(csv_path);
        if let Some(svg) = &f.svg {
            let svg_path = out_dir.join(format!("{}.svg", f.stem));
            std::fs::write(&svg_path, svg)?;
            written.push(svg_path);
        }
    }
    Ok((figs, written))
}
