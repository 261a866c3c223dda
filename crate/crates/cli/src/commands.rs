use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use gridledger_core::dataset::{read_csv, DatasetRow};
use gridledger_core::eval::kfold_cv;
use gridledger_core::forecast::{backtest, price_stabilization_experiment, DemandSeries};
use gridledger_core::ledger::Ledger;
use gridledger_core::models::{Model, ModelArtifact, ModelKind, ModelError};
use gridledger_core::pipeline::FittedPreprocessor;
use gridledger_core::sentinel::{
    adjudicate, read_jsonl, run_case_study_live, write_jsonl, Adjudication, Alert, CaseStudy, CaseStudyConfig,
    Decision,
};
use gridledger_core::simgen::{generate, FraudKind, FraudMix, ScenarioConfig};

use crate::config::Resolved;
use crate::error::{CliError, CliResult, Context};
use crate::figures::emit_figures;
use crate::manifest::Tracker;
use crate::tables::{replicate_status_tables, status_split, status_test, test_report, train_artifact, write_reports};

pub const DATASET: &str = "dataset.csv";
pub const TRUTH: &str = "truth.csv";
pub const CHAIN: &str = "chain";
pub const PREPROCESSOR: &str = "preprocessor.json";

/// Named scenario presets for `--scenario`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ScenarioName {
    Default,
    Diurnal,
    SupplierBurst,
    SybilAttack,
    NoFraud,
}

impl ScenarioName {
    /// The preset with the configured seed and row count.
    pub fn apply(self, base: &ScenarioConfig) -> ScenarioConfig {
        let (seed, n) = (base.seed, base.n_transactions);
        let sized = |c: ScenarioConfig| ScenarioConfig {
            seed,
            n_transactions: n,
            ..c
        };
        match self {
            ScenarioName::Default => base.clone(),
            ScenarioName::Diurnal => ScenarioConfig::diurnal(seed, n),
            ScenarioName::SupplierBurst => sized(ScenarioConfig {
                fraud_mix: FraudMix::only(FraudKind::OffPeakBurst),
                ..ScenarioConfig::diurnal(seed, n)
            }),
            ScenarioName::SybilAttack => sized(ScenarioConfig {
                fraud_mix: FraudMix::only(FraudKind::SybilBurst),
                ..ScenarioConfig::diurnal(seed, n)
            }),
            ScenarioName::NoFraud => ScenarioConfig {
                fraud_rate: 0.0,
                ..base.clone()
            },
        }
    }

    pub fn case(self) -> Option<CaseStudy> {
        match self {
            ScenarioName::SupplierBurst => Some(CaseStudy::SupplierBurst),
            ScenarioName::SybilAttack => Some(CaseStudy::SybilAttack),
            _ => None,
        }
    }
}

fn case_dir(case: CaseStudy) -> &'static str {
    match case {
        CaseStudy::SupplierBurst => "casestudy/supplier-burst",
        CaseStudy::SybilAttack => "casestudy/sybil-attack",
    }
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn load_dataset(tracker: &mut Tracker) -> CliResult<Vec<DatasetRow>> {
    let path = tracker.path(DATASET);
    require(&path)?;
    tracker.input(&path);
    let file = File::open(&path).context(format!("opening {}", path.display()))?;
    read_csv(BufReader::new(file)).context(format!("reading {}", path.display()))
}

fn model_kinds(only: Option<ModelKind>) -> Vec<ModelKind> {
    only.map_or_else(|| ModelKind::ALL.to_vec(), |k| vec![k])
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    text
}

pub fn gen(run: &Resolved) -> CliResult<()> {
    let mut t = Tracker::new(&run.out);
    let out = generate(&run.config.scenario).context("generating scenario")?;
    std::fs::create_dir_all(&run.out).context(format!("creating {}", run.out.display()))?;
    out.export_csv(&t.path(DATASET)).context("writing dataset")?;
    out.export_truth(&t.path(TRUTH)).context("writing truth")?;
    let chain = t.path(CHAIN);
    out.ledger.save(&chain).context("writing chain")?;
    for p in [t.path(DATASET), t.path(TRUTH), chain] {
        t.output(&p)?;
    }
    t.finish("gen", run)?;
    println!("generated {} rows into {}", out.rows().len(), run.out.display());
    Ok(())
}

pub fn train(run: &Resolved, only: Option<ModelKind>) -> CliResult<()> {
    let mut t = Tracker::new(&run.out);
    let rows = load_dataset(&mut t)?;
    let split = status_split(&rows, run)?;
    t.write(PREPROCESSOR, json_line(&split.prep))?;
    for kind in model_kinds(only) {
        let artifact = train_artifact(&split, kind, run)?;
        t.write(&format!("models/{kind}.json"), artifact.to_json())?;
        println!("trained {kind} on {} rows", split.train.x.rows());
    }
    t.finish("train", run)?;
    Ok(())
}

pub fn evaluate(run: &Resolved, only: Option<ModelKind>) -> CliResult<()> {
    let mut t = Tracker::new(&run.out);
    let prep_path = t.path(PREPROCESSOR);
    require(&prep_path)?;
    let kinds = model_kinds(only);
    let model_paths: Vec<PathBuf> = kinds.iter().map(|k| t.path(&format!("models/{k}.json"))).collect();
    for p in &model_paths {
        require(p)?;
    }
    let rows = load_dataset(&mut t)?;
    t.input(&prep_path);
    let text = std::fs::read_to_string(&prep_path).context(format!("reading {}", prep_path.display()))?;
    let prep: FittedPreprocessor =
        serde_json::from_str(&text).context(format!("parsing {}", prep_path.display()))?;
    let test = status_test(&rows, &prep, run)?;
    let mut reports = Vec::new();
    for (kind, path) in kinds.iter().zip(&model_paths) {
        t.input(path);
        let artifact = ModelArtifact::load_for(path, &prep.manifest_hash()).map_err(|e| match e {
            ModelError::ManifestMismatch { .. } => CliError::Validation(format!("{}: {e}", path.display())),
            e => CliError::Failed {
                context: format!("loading {}", path.display()),
                message: e.to_string(),
            },
        })?;
        let report = test_report(&artifact, &test)?;
        println!("{kind} accuracy {:.4}", report.accuracy);
        reports.push((*kind, report));
    }
    write_reports(&mut t, "reports", &reports)?;
    if run.config.cross_validate {
        let split = status_split(&rows, run)?;
        let names = split.prep.labels.clone();
        for kind in &kinds {
            let cfg = run.config.models.get(*kind).clone();
            let summary = kfold_cv(&split.train.x, &split.train.y, &names, &run.config.cv, |x, y, v| {
                Model::train(x, y, names.len(), &cfg)?.predict(v)
            })
            .context(format!("cross-validating {kind}"))?;
            t.write(&format!("reports/cv_{kind}.json"), json_line(&summary))?;
            println!(
                "{kind} cv accuracy {:.4} ± {:.4}",
                summary.mean_accuracy, summary.std_accuracy
            );
        }
    }
    t.finish("evaluate", run)?;
    Ok(())
}

pub fn casestudy(run: &Resolved, scenario: Option<ScenarioName>) -> CliResult<()> {
    let case = match scenario {
        None => CaseStudy::SupplierBurst,
        Some(s) => s
            .case()
            .ok_or_else(|| CliError::Usage("--scenario must be supplier-burst or sybil-attack for casestudy".into()))?,
    };
    let mut t = Tracker::new(&run.out);
    let config = CaseStudyConfig {
        policy: run.config.sentinel,
        ..CaseStudyConfig::preset(case, run.seeds.casestudy)
    };
    let live = run_case_study_live(&config).context(format!("running case study {case}"))?;
    let dir = case_dir(case);
    t.write(&format!("{dir}/report.txt"), live.report.to_string())?;
    t.write(&format!("{dir}/report.json"), json_line(&live.report))?;
    let mut alerts = Vec::new();
    write_jsonl(&mut alerts, live.sentinel.alerts()).context("formatting alerts")?;
    t.write(&format!("{dir}/alerts.jsonl"), alerts)?;
    let chain = t.path(&format!("{dir}/{CHAIN}"));
    live.ledger.save(&chain).context("writing case study chain")?;
    t.output(&chain)?;
    t.finish("casestudy", run)?;
    print!("{}", live.report);
    Ok(())
}

pub fn adjudicate_alert(
    run: &Resolved,
    scenario: Option<ScenarioName>,
    tx_id: &str,
    decision: Decision,
) -> CliResult<()> {
    let case = match scenario {
        None => CaseStudy::SupplierBurst,
        Some(s) => s
            .case()
            .ok_or_else(|| CliError::Usage("--scenario must be supplier-burst or sybil-attack for adjudicate".into()))?,
    };
    let mut t = Tracker::new(&run.out);
    let dir = case_dir(case);
    let chain = t.path(&format!("{dir}/{CHAIN}"));
    let alerts_path = t.path(&format!("{dir}/alerts.jsonl"));
    require(&chain)?;
    require(&alerts_path)?;
    let mut ledger = Ledger::load(&chain).context(format!("loading {}", chain.display()))?;
    let file = File::open(&alerts_path).context(format!("opening {}", alerts_path.display()))?;
    let mut alerts: Vec<Alert> = read_jsonl(BufReader::new(file)).context(format!("reading {}", alerts_path.display()))?;
    let at = alerts
        .iter()
        .find(|a| a.transaction_id == tx_id)
        .map(|a| a.raised_at)
        .ok_or_else(|| CliError::Validation(format!("no alert on transaction {tx_id}")))?;
    let log_path = t.path(&format!("{dir}/adjudications.jsonl"));
    let mut log: Vec<Adjudication> = if log_path.exists() {
        let file = File::open(&log_path).context(format!("opening {}", log_path.display()))?;
        read_jsonl(BufReader::new(file)).context(format!("reading {}", log_path.display()))?
    } else {
        Vec::new()
    };
    let adj = adjudicate(&mut alerts, &mut ledger, tx_id, decision, at)
        .map_err(|e| CliError::Validation(format!("adjudicating {tx_id}: {e}")))?;
    ledger.save(&chain).context("writing case study chain")?;
    t.output(&chain)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &alerts).context("formatting alerts")?;
    t.write(&format!("{dir}/alerts.jsonl"), buf)?;
    log.push(adj.clone());
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &log).context("formatting adjudications")?;
    t.write(&format!("{dir}/adjudications.jsonl"), buf)?;
    t.finish("adjudicate", run)?;
    println!("{} {tx_id}: settled={}", adj.decision, adj.settled);
    Ok(())
}

pub fn forecast(run: &Resolved) -> CliResult<()> {
    let mut t = Tracker::new(&run.out);
    let fc = &run.config.forecast;
    let series = fc.demand.generate().context("generating demand")?;
    std::fs::create_dir_all(t.path("forecast")).context("creating forecast directory")?;
    let demand_path = t.path("forecast/demand.csv");
    series.write_csv(&demand_path).context("writing demand")?;
    t.output(&demand_path)?;
    let report = backtest(&series, fc.kind, fc.holdout_days * 24).context("backtesting forecast")?;
    let forecast_path = t.path("forecast/forecast.csv");
    report.write_csv(&forecast_path).context("writing forecast")?;
    t.output(&forecast_path)?;
    let stab = price_stabilization_experiment(&fc.stabilization, run.seeds.stabilization)
        .context("running stabilization experiment")?;
    t.write("forecast/report.txt", format!("{report}\n{stab}\n"))?;
    t.write("forecast/stabilization.json", json_line(&stab))?;
    let chain = t.path(CHAIN);
    if chain.is_dir() {
        let ledger = Ledger::load(&chain).context(format!("loading {}", chain.display()))?;
        t.input(&chain.join("chain.jsonl"));
        let scenario = &run.config.scenario;
        let hours = scenario.hours.iter().map(|h| h.offset as usize + 1).max().unwrap_or(0);
        let settled = DemandSeries::from_ledger(&ledger, scenario.start, hours).context("bucketing settled demand")?;
        let path = t.path("forecast/settled_demand.csv");
        settled.write_csv(&path).context("writing settled demand")?;
        t.output(&path)?;
    }
    t.finish("forecast", run)?;
    println!("{report}");
    println!("{stab}");
    Ok(())
}

pub fn report(run: &Resolved) -> CliResult<()> {
    let mut t = Tracker::new(&run.out);
    let rows = load_dataset(&mut t)?;
    let (_, written) = emit_figures(&t.path(DATASET), &t.path("figures")).context("emitting figures")?;
    for p in &written {
        t.output(p)?;
    }
    let reports = replicate_status_tables(&rows, run)?;
    write_reports(&mut t, "tables", &reports)?;
    for (kind, r) in &reports {
        println!("{kind} accuracy {:.4}", r.accuracy);
    }
    t.finish("report", run)?;
    Ok(())
}

/// Exit 2 when the directory is missing, 1 when it fails to load or verify.
pub fn validate_chain(dir: &Path) -> CliResult<()> {
    if !dir.is_dir() {
        return Err(CliError::MissingInput(dir.to_path_buf()));
    }
    let ledger = Ledger::load(dir).map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
    ledger
        .validate_chain()
        .map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
    println!("chain valid: {} blocks", ledger.blocks().len());
    Ok(())
}
