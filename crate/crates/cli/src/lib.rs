//! The `gridledger` command-line driver.

pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod manifest;
pub mod svg;
pub mod tables;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use gridledger_core::models::ModelKind;
use gridledger_core::sentinel::Decision;
use gridledger_core::simgen::ScenarioConfig;

use crate::commands::ScenarioName;
use crate::config::{RunConfig, OUT_ENV};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "gridledger", version, about = "Energy-trading ledger simulator and experiment runner")]
pub struct Cli {
    /// JSON run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config and GRIDLEDGER_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Scenario preset for gen, or the case for casestudy and adjudicate.
    #[arg(long, global = true, value_enum)]
    pub scenario: Option<ScenarioName>,
    /// Restrict train and evaluate to one model.
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logreg,
    Forest,
    Gbt,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Logreg => ModelKind::LogisticRegression,
            ModelArg::Forest => ModelKind::RandomForest,
            ModelArg::Gbt => ModelKind::GradientBoosted,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecisionArg {
    Release,
    Reject,
}

impl From<DecisionArg> for Decision {
    fn from(d: DecisionArg) -> Self {
        match d {
            DecisionArg::Release => Decision::Release,
            DecisionArg::Reject => Decision::Reject,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write the dataset, truth labels and chain.
    Gen,
    /// Fit the preprocessor and status models on the training split.
    Train,
    /// Score trained models on the held-out split.
    Evaluate,
    /// Run a fraud case study with the live sentinel.
    Casestudy,
    /// Backtest the demand forecast and run the stabilization experiment.
    Forecast,
    /// Emit figure aggregates and the status classification tables.
    Report,
    /// Release or reject a held transaction from a case study.
    Adjudicate {
        tx_id: String,
        #[arg(long, value_enum)]
        decision: DecisionArg,
    },
    /// Verify a saved chain directory (default `<out>/chain`).
    ValidateChain { path: Option<PathBuf> },
}

/// Resolves the configuration and runs one command.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    if let (Some(s), Command::Gen) = (cli.scenario, &cli.command) {
        let seed = cli.seed.unwrap_or(config.seed);
        config.scenario = s.apply(&ScenarioConfig { seed, ..config.scenario.clone() });
    }
    let run = config.resolve(cli.seed, cli.out.clone(), env_out)?;
    let model = cli.model.map(ModelKind::from);
    match cli.command {
        Command::Gen => commands::gen(&run),
        Command::Train => commands::train(&run, model),
        Command::Evaluate => commands::evaluate(&run, model),
        Command::Casestudy => commands::casestudy(&run, cli.scenario),
        Command::Forecast => commands::forecast(&run),
        Command::Report => commands::report(&run),
        Command::Adjudicate { tx_id, decision } => {
            commands::adjudicate_alert(&run, cli.scenario, &tx_id, decision.into())
        }
        Command::ValidateChain { path } => commands::validate_chain(&path.unwrap_or_else(|| run.out.join(commands::CHAIN))),
    }
}
