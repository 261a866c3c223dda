//! The status-classification pipeline shared by `train`, `evaluate` and
//! `report`.

use gridledger_core::dataset::DatasetRow;
use gridledger_core::eval::{classification_report, write_accuracy_csv, ClassReport};
use gridledger_core::models::{Model, ModelArtifact, ModelKind};
use gridledger_core::pipeline::{fit_transform, stratified_split, FeatureMatrix, FittedPreprocessor};

use crate::config::Resolved;
use crate::error::{CliResult, Context};
use crate::manifest::Tracker;

/// A preprocessor fitted on the training split and both transformed sides.
#[derive(Debug)]
pub struct StatusSplit {
    pub prep: FittedPreprocessor,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub fn status_labels(rows: &[DatasetRow]) -> Vec<String> {
    rows.iter().map(|r| r.transaction_status.to_string()).collect()
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Splits on transaction status and fits the preprocessor on the train side.
pub fn status_split(rows: &[DatasetRow], run: &Resolved) -> CliResult<StatusSplit> {
    let labels = status_labels(rows);
    let split = stratified_split(&labels, run.config.test_fraction, run.seeds.split).context("splitting dataset")?;
    let (prep, train) =
        fit_transform(&pick(rows, &split.train), &pick(&labels, &split.train)).context("fitting preprocessor")?;
    let test = prep
        .transform(&pick(rows, &split.test), Some(&pick(&labels, &split.test)))
        .context("transforming test split")?;
    Ok(StatusSplit { prep, train, test })
}

/// Held-out test matrix for an already fitted preprocessor.
pub fn status_test(rows: &[DatasetRow], prep: &FittedPreprocessor, run: &Resolved) -> CliResult<FeatureMatrix> {
    let labels = status_labels(rows);
    let split = stratified_split(&labels, run.config.test_fraction, run.seeds.split).context("splitting dataset")?;
    prep.transform(&pick(rows, &split.test), Some(&pick(&labels, &split.test)))
        .context("transforming test split")
}

pub fn train_artifact(split: &StatusSplit, kind: ModelKind, run: &Resolved) -> CliResult<ModelArtifact> {
    let config = run.config.models.get(kind).clone();
    let model = Model::train(&split.train.x, &split.train.y, split.prep.labels.len(), &config)
        .context(format!("training {kind}"))?;
    Ok(ModelArtifact {
        config,
        manifest_hash: split.prep.manifest_hash(),
        class_names: split.prep.labels.clone(),
        model,
    })
}

pub fn test_report(artifact: &ModelArtifact, test: &FeatureMatrix) -> CliResult<ClassReport> {
    let kind = artifact.config.model_kind;
    let pred = artifact.predict(&test.x).context(format!("predicting with {kind}"))?;
    classification_report(&test.y, &pred, &artifact.class_names).context(format!("scoring {kind}"))
}

/// Writes `<dir>/<kind>.txt`, `<dir>/<kind>.csv` and `<dir>/comparison.csv`.
pub fn write_reports(tracker: &mut Tracker, dir: &str, reports: &[(ModelKind, ClassReport)]) -> CliResult<()> {
    for (kind, report) in reports {
        tracker.write(&format!("{dir}/{kind}.txt"), report.to_string())?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv).context("formatting report")?;
        tracker.write(&format!("{dir}/{kind}.csv"), csv)?;
    }
    let rows: Vec<(&str, f64)> = reports.iter().map(|(k, r)| (k.as_str(), r.accuracy)).collect();
    let mut csv = Vec::new();
    write_accuracy_csv(&mut csv, &rows).context("formatting comparison")?;
    tracker.write(&format!("{dir}/comparison.csv"), csv)?;
    Ok(())
}

/// Runs the status pipeline with all three configured models and returns
/// their held-out reports in [`ModelKind::ALL`] order.
pub fn replicate_status_tables(rows: &[DatasetRow], run: &Resolved) -> CliResult<Vec<(ModelKind, ClassReport)>> {
    let split = status_split(rows, run)?;
    ModelKind::ALL
        .iter()
        .map(|&kind| Ok((kind, test_report(&train_artifact(&split, kind, run)?, &split.test)?)))
        .collect()
}
