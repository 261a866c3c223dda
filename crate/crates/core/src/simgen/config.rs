use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::time::{parse_ts, serde_ts, Timestamp};

use super::FraudKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One simulated hour, `offset` hours after `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HourIntensity {
    pub offset: u32,
    /// Relative share of baseline rows falling in this hour.
    pub intensity: f64,
}

/// Account populations and how authority issuance is spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleMix {
    pub authorities: usize,
    pub dealers: usize,
    pub suppliers: usize,
    pub consumers: usize,
    /// Fraction of all rows that are authority issuance records.
    pub authority_share: f64,
    /// Fraction of issuance credited to suppliers; the rest goes to dealers.
    pub supplier_issuance_share: f64,
    pub capacity_mwh: f64,
    /// Dormant dealer clusters sharing one origin address, used by Sybil bursts.
    pub sybil_clusters: usize,
    pub sybil_cluster_size: usize,
    /// Benign trader groups that share an origin address (e.g. one building).
    pub shared_origin_groups: usize,
    pub shared_origin_size: usize,
    /// Colluding dealer pairs available for wash trading.
    pub wash_pairs: usize,
}

impl Default for RoleMix {
    fn default() -> Self {
        RoleMix {
            authorities: 3,
            dealers: 60,
            suppliers: 60,
            consumers: 0,
            authority_share: 0.33,
            supplier_issuance_share: 0.7,
            capacity_mwh: 100.0,
            sybil_clusters: 2,
            sybil_cluster_size: 5,
            shared_origin_groups: 4,
            shared_origin_size: 3,
            wash_pairs: 3,
        }
    }
}

/// Clearing prices: a truncated normal component and a near-zero uniform one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceMixture {
    pub normal_weight: f64,
    pub normal_mean: f64,
    pub normal_sd: f64,
    pub normal_min: f64,
    pub normal_max: f64,
    pub uniform_min: f64,
    pub uniform_max: f64,
    /// Largest half-spread between a trade's bid and offer limits.
    pub max_half_spread: f64,
}

impl Default for PriceMixture {
    fn default() -> Self {
        PriceMixture {
            normal_weight: 0.98,
            normal_mean: 35.0,
            normal_sd: 2.5,
            normal_min: 30.0,
            normal_max: 40.0,
            uniform_min: 0.0,
            uniform_max: 5.0,
            max_half_spread: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

/// Relative weight of each fraud kind within the fraud budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FraudMix {
    pub spoofing: f64,
    pub double_spend: f64,
    pub meter_inflation: f64,
    pub wash_trade: f64,
    pub sybil_burst: f64,
    pub off_peak_burst: f64,
}

impl Default for FraudMix {
    fn default() -> Self {
        FraudMix {
            spoofing: 1.0,
            double_spend: 1.0,
            meter_inflation: 1.0,
            wash_trade: 1.0,
            sybil_burst: 1.0,
            off_peak_burst: 1.0,
        }
    }
}

impl FraudMix {
    /// Only `kind` is injected.
    pub fn only(kind: FraudKind) -> Self {
        let mut m = FraudMix {
            spoofing: 0.0,
            double_spend: 0.0,
            meter_inflation: 0.0,
            wash_trade: 0.0,
            sybil_burst: 0.0,
            off_peak_burst: 0.0,
        };
        if let Some(w) = m.weight_mut(kind) {
            *w = 1.0;
        }
        m
    }

    pub fn weight(&self, kind: FraudKind) -> f64 {
        match kind {
            FraudKind::Spoofing => self.spoofing,
            FraudKind::DoubleSpend => self.double_spend,
            FraudKind::MeterInflation => self.meter_inflation,
            FraudKind::WashTrade => self.wash_trade,
            FraudKind::SybilBurst => self.sybil_burst,
            FraudKind::OffPeakBurst => self.off_peak_burst,
            FraudKind::None => 0.0,
        }
    }

    fn weight_mut(&mut self, kind: FraudKind) -> Option<&mut f64> {
        Some(match kind {
            FraudKind::Spoofing => &mut self.spoofing,
            FraudKind::DoubleSpend => &mut self.double_spend,
            FraudKind::MeterInflation => &mut self.meter_inflation,
            FraudKind::WashTrade => &mut self.wash_trade,
            FraudKind::SybilBurst => &mut self.sybil_burst,
            FraudKind::OffPeakBurst => &mut self.off_peak_burst,
            FraudKind::None => return None,
        })
    }
}

/// Everything that determines a generated scenario. Missing keys take the
/// defaults below, which reproduce the reference dataset shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Total dataset rows, fraud included.
    pub n_transactions: usize,
    /// Fraction of rows tagged as fraud, in [0, 0.5].
    pub fraud_rate: f64,
    pub fraud_mix: FraudMix,
    #[serde(with = "serde_ts")]
    pub start: Timestamp,
    pub hours: Vec<HourIntensity>,
    /// Activity decays linearly to zero across each hour instead of being flat.
    pub ramp_within_hour: bool,
    pub role_mix: RoleMix,
    pub price_mixture: PriceMixture,
    pub quantity_max_mwh: f64,
    pub latency_ms: Range,
    /// Latency of Sybil submissions.
    pub sybil_latency_ms: Range,
    /// Weights for SliceA, SliceB, SliceC.
    pub slice_weights: [f64; 3],
    /// Weights for Low, Medium, High.
    pub security_weights: [f64; 3],
    pub encryption_methods: Vec<String>,
    pub zt_probability: f64,
    /// Probabilities for Failed, Pending, Success.
    pub status_probabilities: [f64; 3],
    pub block_size: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            n_transactions: 10_000,
            fraud_rate: 0.07,
            fraud_mix: FraudMix::default(),
            start: parse_ts("2025-02-14T10:00:00Z").expect("valid literal"),
            hours: vec![
                HourIntensity { offset: 0, intensity: 9997.0 },
                HourIntensity { offset: 1, intensity: 3.0 },
            ],
            ramp_within_hour: true,
            role_mix: RoleMix::default(),
            price_mixture: PriceMixture::default(),
            quantity_max_mwh: 100.0,
            latency_ms: Range { min: 5.0, max: 30.0 },
            sybil_latency_ms: Range { min: 1.0, max: 7.9 },
            slice_weights: [1.0; 3],
            security_weights: [1.0; 3],
            encryption_methods: vec!["AES-128".into(), "AES-256".into(), "ChaCha20".into()],
            zt_probability: 0.5,
            status_probabilities: [1.0 / 3.0; 3],
            block_size: 100,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// A full day with a diurnal cycle: busy afternoons, quiet nights.
    pub fn diurnal(seed: u64, n_transactions: usize) -> Self {
        let hours = (0..24)
            .map(|h| HourIntensity {
                offset: h,
                intensity: 1.0 + 0.8 * (std::f64::consts::TAU * (h as f64 - 9.0) / 24.0).sin(),
            })
            .collect();
        ScenarioConfig {
            seed,
            n_transactions,
            start: parse_ts("2025-02-14T00:00:00Z").expect("valid literal"),
            hours,
            ramp_within_hour: false,
            ..ScenarioConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(0.0..=0.5).contains(&self.fraud_rate) {
            return bad("fraud_rate must be in [0, 0.5]");
        }
        if self.n_transactions == 0 {
            return bad("n_transactions must be positive");
        }
        if self.hours.is_empty() {
            return bad("hours must not be empty");
        }
        if self.hours.iter().any(|h| !(h.intensity >= 0.0 && h.intensity.is_finite())) {
            return bad("hour intensities must be finite and non-negative");
        }
        if self.hours.iter().map(|h| h.intensity).sum::<f64>() <= 0.0 {
            return bad("at least one hour needs positive intensity");
        }
        let mut offsets: Vec<u32> = self.hours.iter().map(|h| h.offset).collect();
        offsets.sort_unstable();
        if offsets.windows(2).any(|w| w[0] == w[1]) {
            return bad("hour offsets must be distinct");
        }
        let r = &self.role_mix;
        if r.authorities == 0 {
            return bad("at least one authority is required");
        }
        if r.dealers + r.suppliers + r.consumers < 2 {
            return bad("at least two traders are required");
        }
        if !unit(r.authority_share) || !unit(r.supplier_issuance_share) {
            return bad("role_mix shares must be in [0, 1]");
        }
        if !(r.capacity_mwh > 0.0) {
            return bad("capacity_mwh must be positive");
        }
        let w = self.fraud_mix.clone();
        let weights = [w.spoofing, w.double_spend, w.meter_inflation, w.wash_trade, w.sybil_burst, w.off_peak_burst];
        if weights.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad("fraud_mix weights must be finite and non-negative");
        }
        if self.fraud_rate > 0.0 && weights.iter().sum::<f64>() <= 0.0 {
            return bad("fraud_mix needs a positive weight when fraud_rate > 0");
        }
        let p = &self.price_mixture;
        if !unit(p.normal_weight)
            || !(p.normal_sd > 0.0)
            || !(p.normal_min < p.normal_max)
            || !(p.uniform_min >= 0.0 && p.uniform_min < p.uniform_max)
            || p.normal_min < 0.0
            || !(p.max_half_spread >= 0.0)
        {
            return bad("price_mixture parameters are inconsistent");
        }
        if !(self.quantity_max_mwh >= 0.001) {
            return bad("quantity_max_mwh must be at least 0.001");
        }
        for range in [self.latency_ms, self.sybil_latency_ms] {
            if !(range.min >= 0.0 && range.min < range.max) {
                return bad("latency ranges need 0 <= min < max");
            }
        }
        for ws in [self.slice_weights, self.security_weights, self.status_probabilities] {
            if ws.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || ws.iter().sum::<f64>() <= 0.0 {
                return bad("categorical weights must be non-negative with a positive sum");
            }
        }
        if self.encryption_methods.is_empty() {
            return bad("encryption_methods must not be empty");
        }
        if !unit(self.zt_probability) {
            return bad("zt_probability must be in [0, 1]");
        }
        if self.block_size == 0 {
            return bad("block_size must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        assert_eq!(ScenarioConfig::from_json("{}").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_rates() {
        assert!(matches!(ScenarioConfig::from_json(r#"{"sed": 1}"#), Err(ConfigError::Json(_))));
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"fraud_rate": 0.6}"#),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"hours": [{"offset": 0, "intensity": -1}]}"#),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::diurnal(3, 500);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    }
}
