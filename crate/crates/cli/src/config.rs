//! The run configuration: one JSON document in which every key is optional.

use std::path::{Path, PathBuf};

use gridledger_core::eval::CVConfig;
use gridledger_core::forecast::{ForecastKind, StabilizationConfig, SyntheticDemand};
use gridledger_core::models::{ModelKind, TrainConfig};
use gridledger_core::sentinel::SentinelPolicy;
use gridledger_core::simgen::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUT_ENV: &str = "GRIDLEDGER_OUT";
pub const DEFAULT_OUT: &str = "out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every module seed; see [`Seeds`].
    pub seed: u64,
    /// Output directory. When absent, `GRIDLEDGER_OUT` or `out` is used.
    pub out_dir: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub test_fraction: f64,
    pub models: ModelConfigs,
    pub cv: CVConfig,
    /// Run k-fold cross-validation on the training split during `evaluate`.
    pub cross_validate: bool,
    pub sentinel: SentinelPolicy,
    pub forecast: ForecastSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out_dir: None,
            scenario: ScenarioConfig::default(),
            test_fraction: 0.25,
            models: ModelConfigs::default(),
            cv: CVConfig::default(),
            cross_validate: false,
            sentinel: SentinelPolicy::default(),
            forecast: ForecastSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfigs {
    pub logreg: TrainConfig,
    pub forest: TrainConfig,
    pub gbt: TrainConfig,
}

impl Default for ModelConfigs {
    fn default() -> Self {
        ModelConfigs {
            logreg: TrainConfig::logistic(42),
            forest: TrainConfig::forest(42),
            gbt: TrainConfig::gbt(42),
        }
    }
}

impl ModelConfigs {
    pub fn get(&self, kind: ModelKind) -> &TrainConfig {
        match kind {
            ModelKind::LogisticRegression => &self.logreg,
            ModelKind::RandomForest => &self.forest,
            ModelKind::GradientBoosted => &self.gbt,
        }
    }

    fn get_mut(&mut self, kind: ModelKind) -> &mut TrainConfig {
        match kind {
            ModelKind::LogisticRegression => &mut self.logreg,
            ModelKind::RandomForest => &mut self.forest,
            ModelKind::GradientBoosted => &mut self.gbt,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    pub kind: ForecastKind,
    pub demand: SyntheticDemand,
    /// Trailing days held out for the forecast report.
    pub holdout_days: usize,
    pub stabilization: StabilizationConfig,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        ForecastSettings {
            kind: ForecastKind::SeasonalNaive,
            demand: SyntheticDemand::default(),
            holdout_days: 7,
            stabilization: StabilizationConfig::default(),
        }
    }
}

/// Module seeds, each a fixed offset from the global seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub global: u64,
    pub scenario: u64,
    pub split: u64,
    pub logreg: u64,
    pub forest: u64,
    pub gbt: u64,
    pub cv: u64,
    pub casestudy: u64,
    pub demand: u64,
    pub stabilization: u64,
}

impl Seeds {
    pub fn derive(global: u64) -> Self {
        let at = |offset: u64| global.wrapping_add(offset);
        Seeds {
            global,
            scenario: at(0),
            split: at(1),
            logreg: at(2),
            forest: at(3),
            gbt: at(4),
            cv: at(5),
            casestudy: at(0),
            demand: at(6),
            stabilization: at(7),
        }
    }

    pub fn model(&self, kind: ModelKind) -> u64 {
        match kind {
            ModelKind::LogisticRegression => self.logreg,
            ModelKind::RandomForest => self.forest,
            ModelKind::GradientBoosted => self.gbt,
        }
    }
}

/// A config with seeds applied and the output directory made absolute.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub config: RunConfig,
    pub seeds: Seeds,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads `path`; a missing file or malformed document is a usage error
    /// naming the flag.
    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.is_file() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(format!("invalid config: {m}")));
        if let Err(e) = self.scenario.validate() {
            return bad(e.to_string());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} must lie in (0, 1)", self.test_fraction));
        }
        for kind in ModelKind::ALL {
            let c = self.models.get(*kind);
            if c.model_kind != *kind {
                return bad(format!("models.{kind} has model_kind {}", c.model_kind));
            }
            if let Err(e) = c.validate() {
                return bad(format!("models.{kind}: {e}"));
            }
        }
        if self.cv.k < 2 {
            return bad("cv.k must be at least 2".into());
        }
        if let Err(e) = self.sentinel.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.forecast.demand.validate().and(self.forecast.stabilization.validate()) {
            return bad(e.to_string());
        }
        if self.forecast.holdout_days == 0 {
            return bad("forecast.holdout_days must be at least 1".into());
        }
        Ok(())
    }

    /// Applies the global seed (after `seed` overrides it) to every module
    /// and picks the output directory: `out` flag, then the config's
    /// `out_dir`, then `env_out`, then `out`.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>, env_out: Option<PathBuf>) -> CliResult<Resolved> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.validate()?;
        let seeds = Seeds::derive(self.seed);
        self.scenario.seed = seeds.scenario;
        for kind in ModelKind::ALL {
            self.models.get_mut(*kind).random_state = seeds.model(*kind);
        }
        self.cv.seed = seeds.cv;
        self.forecast.demand.seed = seeds.demand;
        let dir = out
            .or_else(|| self.out_dir.clone())
            .or(env_out)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let dir = if dir.is_absolute() {
            dir
        } else {
            std::env::current_dir()
                .map_err(|e| CliError::Usage(format!("cannot resolve {}: {e}", dir.display())))?
                .join(dir)
        };
        self.out_dir = Some(dir.clone());
        Ok(Resolved {
            config: self,
            seeds,
            out: dir,
        })
    }
}
