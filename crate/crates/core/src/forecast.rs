//! Hourly demand forecasting and the price-stabilization experiment.
//!
//! Demand is a gap-free hourly series. [`fit_demand`] fits either the
//! seasonal-naive reference (the value 24 hours earlier) or a boosted
//! regressor on lag and calendar features. The experiment runs the same
//! order flow through two markets that differ only in how agents set their
//! limit prices, and compares the spread of settlement prices.

use std::fmt;
use std::path::Path;

use chrono::Duration;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fixed::{Money, Mwh};
use crate::ledger::{
    Account, AccountId, Ledger, LedgerConfig, LedgerError, LegAttributes, RecordTerms, Role, TransactionRecord,
    TxPhase, TxType, Verdict,
};
use crate::market::{Market, MarketError, Side};
use crate::matrix::Matrix;
use crate::models::{train_gbt_regressor, BoostedRegressor, ModelError, TrainConfig};
use crate::numeric::std_dev;
use crate::rng::stream;
use crate::simgen::SimOutput;
use crate::time::{calendar_fields, format_ts, parse_ts, serde_ts, Timestamp, UnparsableTimestamp};

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("{kind} needs at least {needed} hours of history, found {found}")]
    InsufficientHistory {
        kind: ForecastKind,
        needed: usize,
        found: usize,
    },
    #[error("every actual value is zero")]
    AllZeroActuals,
    #[error("{actual} actual values but {predicted} predictions")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("invalid demand series: {0}")]
    InvalidSeries(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("experiment arms saw different order arrivals")]
    ArrivalMismatch,
    #[error("ledger rejected {tx}: {reason}")]
    Rejected { tx: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Timestamp(#[from] UnparsableTimestamp),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

labeled_enum! {
    pub enum ForecastKind {
        SeasonalNaive => "seasonal-naive",
        BoostedRegression => "boosted",
    }
}

impl ForecastKind {
    /// Hours of history [`fit_demand`] requires.
    pub fn min_history(self) -> usize {
        match self {
            ForecastKind::SeasonalNaive => 2 * HOURS_PER_DAY,
            ForecastKind::BoostedRegression => 7 * HOURS_PER_DAY,
        }
    }
}

/// Demand in MWh for consecutive hours starting at `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandSeries {
    start: Timestamp,
    demand: Vec<f64>,
}

impl DemandSeries {
    pub fn new(start: Timestamp, demand: Vec<f64>) -> Result<Self, ForecastError> {
        if start.timestamp() % 3600 != 0 {
            return Err(ForecastError::InvalidSeries(format!("{} is not on the hour", format_ts(&start))));
        }
        if let Some(i) = demand.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(ForecastError::InvalidSeries(format!("demand at hour {i} is {}", demand[i])));
        }
        Ok(DemandSeries { start, demand })
    }

    /// Builds a series from explicit points, which must be exactly one hour
    /// apart.
    pub fn from_points(points: &[(Timestamp, f64)]) -> Result<Self, ForecastError> {
        let Some((start, _)) = points.first() else {
            return Err(ForecastError::InvalidSeries("no points".into()));
        };
        for (i, w) in points.windows(2).enumerate() {
            if w[1].0 - w[0].0 != Duration::hours(1) {
                return Err(ForecastError::InvalidSeries(format!(
                    "points {i} and {} are not one hour apart",
                    i + 1
                )));
            }
        }
        Self::new(*start, points.iter().map(|p| p.1).collect())
    }

    /// Settled sell volume per hour of a simulation, over every hour the
    /// scenario covers. Hours without trades count as zero demand.
    pub fn from_simulation(out: &SimOutput) -> Result<Self, ForecastError> {
        let hours = out.config.hours.iter().map(|h| h.offset as usize + 1).max().unwrap_or(0);
        Self::from_ledger(&out.ledger, out.config.start, hours)
    }

    /// Settled sell volume per hour of a ledger for `hours` hours from
    /// `start`. Trades outside that span are ignored.
    pub fn from_ledger(ledger: &Ledger, start: Timestamp, hours: usize) -> Result<Self, ForecastError> {
        let mut demand = vec![0.0; hours];
        for tx in ledger.chain_transactions() {
            if tx.transaction_type != TxType::Sell || ledger.phase(&tx.transaction_id) != Some(TxPhase::Settled) {
                continue;
            }
            let secs = (tx.timestamp - start).num_seconds();
            if let Some(d) = usize::try_from(secs / 3600).ok().filter(|_| secs >= 0).and_then(|h| demand.get_mut(h)) {
                *d += tx.electricity_quantity.to_f64();
            }
        }
        Self::new(start, demand)
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.demand
    }

    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    /// Timestamp of hour `i`; `i` may run past the end.
    pub fn timestamp(&self, i: usize) -> Timestamp {
        self.start + Duration::hours(i as i64)
    }

    pub fn timestamps(&self) -> Vec<Timestamp> {
        (0..self.len()).map(|i| self.timestamp(i)).collect()
    }

    /// The first `n` hours and the rest.
    pub fn split_at(&self, n: usize) -> (DemandSeries, DemandSeries) {
        let n = n.min(self.len());
        (
            DemandSeries {
                start: self.start,
                demand: self.demand[..n].to_vec(),
            },
            DemandSeries {
                start: self.timestamp(n),
                demand: self.demand[n..].to_vec(),
            },
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ForecastError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["timestamp", "demand"])?;
        for (i, d) in self.demand.iter().enumerate() {
            w.write_record([format_ts(&self.timestamp(i)), format!("{d:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, ForecastError> {
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let (Some(ts), Some(d)) = (rec.get(0), rec.get(1)) else {
                return Err(ForecastError::InvalidSeries("expected timestamp,demand".into()));
            };
            let d: f64 = d
                .parse()
                .map_err(|_| ForecastError::InvalidSeries(format!("unparsable demand {d:?}")))?;
            points.push((parse_ts(ts)?, d));
        }
        Self::from_points(&points)
    }
}

/// A daily cycle peaking at `peak_hour` with uniform multiplicative noise:
/// `base · (1 + amplitude · cycle) · (1 + noise · u)` with `u` uniform on
/// [-1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDemand {
    #[serde(with = "serde_ts")]
    pub start: Timestamp,
    pub days: usize,
    pub base_mwh: f64,
    pub amplitude: f64,
    pub peak_hour: u32,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticDemand {
    fn default() -> Self {
        SyntheticDemand {
            start: parse_ts("2025-02-03T00:00:00Z").expect("valid literal"),
            days: 28,
            base_mwh: 100.0,
            amplitude: 0.3,
            peak_hour: 18,
            noise: 0.05,
            seed: 7,
        }
    }
}

impl SyntheticDemand {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.to_string()));
        if self.days == 0 {
            return bad("days must be at least 1");
        }
        if !(self.base_mwh > 0.0 && self.base_mwh.is_finite()) {
            return bad("base_mwh must be positive");
        }
        if !(0.0..1.0).contains(&self.amplitude) || !(0.0..1.0).contains(&self.noise) {
            return bad("amplitude and noise must lie in [0, 1)");
        }
        if self.peak_hour >= 24 {
            return bad("peak_hour must be below 24");
        }
        Ok(())
    }

    /// Noise-free demand at hour-of-day `hour`.
    pub fn profile(&self, hour: u32) -> f64 {
        let phase = std::f64::consts::TAU * (hour as f64 - self.peak_hour as f64 + 6.0) / 24.0;
        self.base_mwh * (1.0 + self.amplitude * phase.sin())
    }

    pub fn generate(&self) -> Result<DemandSeries, ForecastError> {
        self.validate()?;
        let mut rng = stream(self.seed, "synthetic-demand");
        let demand = (0..self.days * HOURS_PER_DAY)
            .map(|i| {
                let (hour, _, _) = calendar_fields(&(self.start + Duration::hours(i as i64)));
                let u: f64 = rng.random_range(-1.0..=1.0);
                self.profile(hour) * (1.0 + self.noise * u)
            })
            .collect();
        DemandSeries::new(self.start, demand)
    }
}

/// Absolute percentage error, or `None` when the actual value is not
/// positive.
pub fn ape(actual: f64, predicted: f64) -> Option<f64> {
    (actual > 0.0).then(|| 100.0 * (actual - predicted).abs() / actual)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub percent: f64,
    /// Entries left out because the actual value was zero.
    pub skipped: usize,
}

pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<Mape, ForecastError> {
    if actual.len() != predicted.len() {
        return Err(ForecastError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    let errors: Vec<f64> = actual.iter().zip(predicted).filter_map(|(a, p)| ape(*a, *p)).collect();
    if errors.is_empty() {
        return Err(ForecastError::AllZeroActuals);
    }
    Ok(Mape {
        percent: errors.iter().sum::<f64>() / errors.len() as f64,
        skipped: actual.len() - errors.len(),
    })
}

/// Boosting settings of the regression forecaster.
pub fn boosted_config() -> TrainConfig {
    TrainConfig {
        n_estimators: 60,
        learning_rate: 0.1,
        max_depth: Some(4),
        min_samples_leaf: 5,
        ..TrainConfig::gbt(0)
    }
}

/// Hour of day, day of week, and the demand 1 and 24 hours before `at`.
/// `history` ends just before `at`.
fn lag_features(history: &[f64], at: Timestamp) -> [f64; 4] {
    let (hour, weekday, _) = calendar_fields(&at);
    let n = history.len();
    [hour as f64, weekday as f64, history[n - 1], history[n - HOURS_PER_DAY]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DemandModel {
    SeasonalNaive,
    Boosted(BoostedRegressor),
}

pub fn fit_demand(series: &DemandSeries, kind: ForecastKind) -> Result<DemandModel, ForecastError> {
    let needed = kind.min_history();
    if series.len() < needed {
        return Err(ForecastError::InsufficientHistory {
            kind,
            needed,
            found: series.len(),
        });
    }
    match kind {
        ForecastKind::SeasonalNaive => Ok(DemandModel::SeasonalNaive),
        ForecastKind::BoostedRegression => {
            let y = series.values();
            let rows: Vec<[f64; 4]> = (HOURS_PER_DAY..y.len())
                .map(|t| lag_features(&y[..t], series.timestamp(t)))
                .collect();
            let x = Matrix::from_rows(&rows);
            let reg = train_gbt_regressor(&x, &y[HOURS_PER_DAY..], &boosted_config())?;
            Ok(DemandModel::Boosted(reg))
        }
    }
}

impl DemandModel {
    pub fn kind(&self) -> ForecastKind {
        match self {
            DemandModel::SeasonalNaive => ForecastKind::SeasonalNaive,
            DemandModel::Boosted(_) => ForecastKind::BoostedRegression,
        }
    }

    fn step(&self, history: &[f64], at: Timestamp) -> f64 {
        match self {
            DemandModel::SeasonalNaive => history[history.len() - HOURS_PER_DAY],
            DemandModel::Boosted(reg) => reg.predict_row(&lag_features(history, at)).max(0.0),
        }
    }

    /// Demand for the hour right after `history`.
    pub fn predict_next(&self, history: &DemandSeries) -> Result<f64, ForecastError> {
        Ok(self.forecast(history, 1)?[0])
    }

    /// The next `horizon` hours, feeding each prediction back in as history.
    pub fn forecast(&self, history: &DemandSeries, horizon: usize) -> Result<Vec<f64>, ForecastError> {
        if history.len() < HOURS_PER_DAY {
            return Err(ForecastError::InsufficientHistory {
                kind: self.kind(),
                needed: HOURS_PER_DAY,
                found: history.len(),
            });
        }
        let n = history.len();
        let mut work = history.values().to_vec();
        for k in 0..horizon {
            let p = self.step(&work, history.timestamp(n + k));
            work.push(p);
        }
        Ok(work.split_off(n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastReport {
    pub kind: ForecastKind,
    pub horizon: usize,
    pub timestamps: Vec<Timestamp>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Per-hour absolute percentage error; `None` where the actual is zero.
    pub ape: Vec<Option<f64>>,
    pub mape: f64,
    pub skipped: usize,
}

impl ForecastReport {
    pub fn write_csv(&self, path: &Path) -> Result<(), ForecastError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["timestamp", "actual", "predicted", "ape"])?;
        for i in 0..self.horizon {
            w.write_record([
                format_ts(&self.timestamps[i]),
                format!("{:.6}", self.actual[i]),
                format!("{:.6}", self.predicted[i]),
                self.ape[i].map(|e| format!("{e:.6}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for ForecastReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} horizon={}h mape={:.3}% skipped={}",
            self.kind, self.horizon, self.mape, self.skipped
        )
    }
}

/// Forecasts the hours of `actual`, which must follow `history` directly.
pub fn evaluate_forecast(
    model: &DemandModel,
    history: &DemandSeries,
    actual: &DemandSeries,
) -> Result<ForecastReport, ForecastError> {
    if actual.start() != history.timestamp(history.len()) {
        return Err(ForecastError::InvalidSeries("evaluation hours do not follow the history".into()));
    }
    let predicted = model.forecast(history, actual.len())?;
    let m = mape(actual.values(), &predicted)?;
    Ok(ForecastReport {
        kind: model.kind(),
        horizon: actual.len(),
        timestamps: actual.timestamps(),
        ape: actual.values().iter().zip(&predicted).map(|(a, p)| ape(*a, *p)).collect(),
        actual: actual.values().to_vec(),
        predicted,
        mape: m.percent,
        skipped: m.skipped,
    })
}

/// Fits on all but the last `holdout` hours and forecasts those.
pub fn backtest(series: &DemandSeries, kind: ForecastKind, holdout: usize) -> Result<ForecastReport, ForecastError> {
    let (history, actual) = series.split_at(series.len().saturating_sub(holdout));
    let model = fit_demand(&history, kind)?;
    evaluate_forecast(&model, &history, &actual)
}

labeled_enum! {
    /// Where the informed arm gets its demand expectation.
    pub enum ForecastSource {
        SeasonalNaive => "seasonal-naive",
        BoostedRegression => "boosted",
        /// The realised demand itself.
        Perfect => "perfect",
    }
}

/// Both arms see hourly demand from `demand`, a fixed supply of
/// `demand.base_mwh` per hour, and the same orders. Agents price around a
/// reference `base_price · (1 + price_sensitivity · imbalance)`. The
/// baseline reference uses the realised imbalance of the previous hour; the
/// informed reference moves a fraction `shading` of the way toward the level
/// implied by the forecast for the current hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationConfig {
    pub demand: SyntheticDemand,
    /// Leading days used only to fit the forecaster.
    pub train_days: usize,
    pub forecast: ForecastSource,
    pub base_price: f64,
    pub price_sensitivity: f64,
    /// 0 gives both arms the same pricing rule.
    pub shading: f64,
    /// Buy and sell orders per hour, each.
    pub orders_per_hour: usize,
    /// Bids sit this fraction above the reference and offers below it.
    pub limit_spread: f64,
    /// Half-width of the per-order uniform price jitter, as a fraction.
    pub limit_jitter: f64,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        StabilizationConfig {
            demand: SyntheticDemand {
                amplitude: 0.2,
                noise: 0.15,
                ..SyntheticDemand::default()
            },
            train_days: 21,
            forecast: ForecastSource::BoostedRegression,
            base_price: 35.0,
            price_sensitivity: 1.0,
            shading: 0.5,
            orders_per_hour: 6,
            limit_spread: 0.02,
            limit_jitter: 0.01,
        }
    }
}

impl StabilizationConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        self.demand.validate()?;
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.to_string()));
        if self.train_days >= self.demand.days {
            return bad("train_days must leave at least one evaluation day");
        }
        if self.forecast != ForecastSource::Perfect
            && self.train_days * HOURS_PER_DAY < ForecastKind::from(self.forecast).min_history()
        {
            return bad("train_days is too short for the forecaster");
        }
        if !(self.base_price > 0.0 && self.base_price.is_finite()) {
            return bad("base_price must be positive");
        }
        if !(self.price_sensitivity >= 0.0 && self.price_sensitivity.is_finite()) {
            return bad("price_sensitivity must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.shading) {
            return bad("shading must lie in [0, 1]");
        }
        if self.orders_per_hour == 0 {
            return bad("orders_per_hour must be at least 1");
        }
        if !(0.0..0.5).contains(&self.limit_spread) || !(0.0..0.5).contains(&self.limit_jitter) {
            return bad("limit_spread and limit_jitter must lie in [0, 0.5)");
        }
        Ok(())
    }
}

impl From<ForecastSource> for ForecastKind {
    fn from(s: ForecastSource) -> Self {
        match s {
            ForecastSource::SeasonalNaive => ForecastKind::SeasonalNaive,
            ForecastSource::BoostedRegression | ForecastSource::Perfect => ForecastKind::BoostedRegression,
        }
    }
}

/// One order of the shared flow. Prices are set per arm.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderArrival {
    pub time: Timestamp,
    pub side: Side,
    pub account: AccountId,
    pub quantity: Mwh,
    /// Multiplier on the reference before rounding to cents.
    pub price_factor: f64,
}

/// Everything both arms share.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub config: StabilizationConfig,
    pub demand: DemandSeries,
    /// First evaluated hour; earlier hours only train the forecaster.
    pub first_hour: usize,
    /// Forecast demand for each evaluated hour.
    pub forecasts: Vec<f64>,
    /// Orders of each evaluated hour in arrival order.
    pub orders: Vec<Vec<OrderArrival>>,
}

const OPERATOR: &str = "grid-operator";

fn seller(i: usize) -> AccountId {
    AccountId::from(format!("seller-{i:02}").as_str())
}

fn buyer(i: usize) -> AccountId {
    AccountId::from(format!("buyer-{i:02}").as_str())
}

impl ExperimentPlan {
    pub fn new(config: &StabilizationConfig, seed: u64) -> Result<Self, ForecastError> {
        config.validate()?;
        let demand = SyntheticDemand {
            seed,
            ..config.demand.clone()
        }
        .generate()?;
        let first_hour = config.train_days * HOURS_PER_DAY;
        let forecasts = match config.forecast {
            ForecastSource::Perfect => demand.values()[first_hour..].to_vec(),
            source => {
                let model = fit_demand(&demand.split_at(first_hour).0, source.into())?;
                (first_hour..demand.len())
                    .map(|t| model.predict_next(&demand.split_at(t).0))
                    .collect::<Result<_, _>>()?
            }
        };
        let n = config.orders_per_hour;
        let supply = config.demand.base_mwh;
        let mut rng = stream(seed, "stabilization-orders");
        let orders = (first_hour..demand.len())
            .map(|t| {
                let hour_start = demand.timestamp(t);
                let buy_q = Mwh::from_f64(demand.values()[t] / n as f64);
                let sell_q = Mwh::from_f64(supply / n as f64);
                let mut hour: Vec<OrderArrival> = (0..2 * n)
                    .map(|k| {
                        let side = if k < n { Side::Bid } else { Side::Offer };
                        let (account, quantity, sign) = match side {
                            Side::Bid => (buyer(k), buy_q, 1.0),
                            Side::Offer => (seller(k - n), sell_q, -1.0),
                        };
                        let jitter: f64 = rng.random_range(-1.0..=1.0);
                        OrderArrival {
                            time: hour_start + Duration::seconds(rng.random_range(1..3600)),
                            side,
                            account,
                            quantity,
                            price_factor: 1.0 + sign * config.limit_spread + config.limit_jitter * jitter,
                        }
                    })
                    .filter(|o| o.quantity.is_positive())
                    .collect();
                hour.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.account.cmp(&b.account)));
                hour
            })
            .collect();
        Ok(ExperimentPlan {
            config: config.clone(),
            demand,
            first_hour,
            forecasts,
            orders,
        })
    }

    fn level(&self, imbalance: f64) -> f64 {
        self.config.base_price * (1.0 + self.config.price_sensitivity * imbalance)
    }

    /// Reference price of evaluated hour `k` under `shading`.
    pub fn reference(&self, k: usize, shading: f64) -> f64 {
        let supply = self.config.demand.base_mwh;
        let t = self.first_hour + k;
        let realised = (self.demand.values()[t - 1] - supply) / supply;
        let expected = (self.forecasts[k] - supply) / supply;
        let baseline = self.level(realised);
        baseline + shading * (self.level(expected) - baseline)
    }
}

#[derive(Debug)]
pub struct ArmOutcome {
    pub prices: Vec<f64>,
    pub arrivals: Vec<OrderArrival>,
    pub ledger: Ledger,
}

impl ArmOutcome {
    pub fn price_sd(&self) -> f64 {
        std_dev(&self.prices)
    }
}

fn submit(ledger: &mut Ledger, tx: TransactionRecord) -> Result<(), ForecastError> {
    let id = tx.transaction_id.clone();
    match ledger.submit(tx) {
        Verdict::Accept => Ok(()),
        Verdict::Reject(reason) => Err(ForecastError::Rejected {
            tx: id,
            reason: reason.to_string(),
        }),
    }
}

/// Runs the shared order flow through a fresh ledger and market with the
/// given `shading`. Unfilled orders are withdrawn at the end of each hour.
pub fn simulate_arm(plan: &ExperimentPlan, shading: f64) -> Result<ArmOutcome, ForecastError> {
    let n = plan.config.orders_per_hour;
    let capacity = Mwh::from_f64(plan.config.demand.base_mwh * 10.0);
    let mut accounts = vec![Account::new(
        AccountId::from(OPERATOR),
        Role::Authority,
        b"key-grid-operator".to_vec(),
        "10.1.0.1",
        capacity,
    )];
    for i in 0..n {
        accounts.push(Account::new(seller(i), Role::Supplier, format!("key-s{i}").into_bytes(), format!("10.2.0.{i}"), capacity));
        accounts.push(Account::new(buyer(i), Role::Consumer, format!("key-b{i}").into_bytes(), format!("10.3.0.{i}"), capacity));
    }
    let operator = AccountId::from(OPERATOR);
    let mut ledger = Ledger::new(LedgerConfig::default(), accounts, vec![operator.clone()])?;
    let mut market = Market::new();
    let mut prices = Vec::new();
    let mut arrivals = Vec::new();
    let attrs = LegAttributes::default();
    let mut issued = 0u64;
    for (k, hour) in plan.orders.iter().enumerate() {
        let reference = plan.reference(k, shading);
        let hour_start = plan.demand.timestamp(plan.first_hour + k);
        for o in hour.iter().filter(|o| o.side == Side::Offer) {
            issued += 1;
            let auth = ledger.account(&operator).expect("operator registered").clone();
            let terms = RecordTerms {
                transaction_id: format!("issue-{issued:07}"),
                timestamp: hour_start,
                transaction_type: TxType::Unknown,
                quantity: o.quantity,
                price: Money::from_raw(0),
                nonce: auth.nonce + 1,
                counterparty_id: Some(o.account.clone()),
                settlement_id: None,
            };
            let mut tx = TransactionRecord::draft(&auth, terms, &attrs);
            ledger.sign_record(&mut tx, &auth.signing_key);
            submit(&mut ledger, tx)?;
        }
        // Issued tokens become spendable once sealed.
        ledger.flush()?;
        let mut open = Vec::new();
        for o in hour {
            let limit = Money::from_f64(reference * o.price_factor);
            open.push(market.post(&ledger, o.side, format!("{}-{}", o.side, arrivals.len()), &o.account, o.quantity, limit, o.time)?);
            arrivals.push(o.clone());
            for s in market.match_orders(o.time) {
                market.settle(&mut ledger, &s, &attrs, &attrs)?;
                prices.push(s.clearing_price.to_f64());
            }
            if ledger.block_due() {
                ledger.commit_block()?;
            }
        }
        for id in open {
            // Filled orders are already closed.
            let _ = market.cancel(&id);
        }
    }
    ledger.flush()?;
    Ok(ArmOutcome {
        prices,
        arrivals,
        ledger,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub seed: u64,
    pub evaluated_hours: usize,
    pub baseline_settlements: usize,
    pub informed_settlements: usize,
    pub baseline_sd: f64,
    pub informed_sd: f64,
    /// `100 · (baseline_sd − informed_sd) / baseline_sd`.
    pub reduction_pct: f64,
}

impl fmt::Display for StabilizationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "seed={} hours={} baseline_sd={:.4} informed_sd={:.4} reduction={:.2}%",
            self.seed, self.evaluated_hours, self.baseline_sd, self.informed_sd, self.reduction_pct
        )
    }
}

pub fn price_stabilization_experiment(
    config: &StabilizationConfig,
    seed: u64,
) -> Result<StabilizationReport, ForecastError> {
    let plan = ExperimentPlan::new(config, seed)?;
    let baseline = simulate_arm(&plan, 0.0)?;
    let informed = simulate_arm(&plan, config.shading)?;
    if baseline.arrivals != informed.arrivals {
        return Err(ForecastError::ArrivalMismatch);
    }
    let (b, i) = (baseline.price_sd(), informed.price_sd());
    Ok(StabilizationReport {
        seed,
        evaluated_hours: plan.orders.len(),
        baseline_settlements: baseline.prices.len(),
        informed_settlements: informed.prices.len(),
        baseline_sd: b,
        informed_sd: i,
        reduction_pct: if b > 0.0 { 100.0 * (b - i) / b } else { 0.0 },
    })
}
