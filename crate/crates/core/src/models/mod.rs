//! Native classifiers: multinomial logistic regression, CART random forest
//! and softmax gradient-boosted trees, plus hyperparameter search and JSON
//! artifacts.

mod artifact;
mod forest;
mod gbt;
mod logistic;
mod search;
mod tree;

use serde::{Deserialize, Serialize};

use crate::eval::EvalError;
use crate::matrix::Matrix;

pub use artifact::ModelArtifact;
pub use forest::{train_forest, Forest};
pub use gbt::{
    softmax_cross_entropy, softmax_grad_hess, train_gbt, train_gbt_regressor, BoostedEnsemble, BoostedRegressor,
};
pub use logistic::{loss_and_gradient, train_logreg, LinearModel};
pub use search::{grid_search, random_search, Param, SearchResult, SearchSpace};
pub use tree::{gini, train_tree, Node, Tree};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("training set has no rows or no features")]
    EmptyInput,
    #[error("label {label} is outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("search space is empty")]
    EmptySpace,
    #[error("artifact was trained on feature manifest {expected}, input has {found}")]
    ManifestMismatch { expected: String, found: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("malformed artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("artifact i/o: {0}")]
    Io(#[from] std::io::Error),
}

labeled_enum! {
    pub enum ModelKind {
        LogisticRegression => "logreg",
        RandomForest => "forest",
        GradientBoosted => "gbt",
    }
}

/// Candidate features per split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    All,
    /// ⌊√m⌋, at least one.
    Sqrt,
    Count(usize),
}

impl FeatureSubset {
    pub fn resolve(self, m: usize) -> usize {
        let k = match self {
            FeatureSubset::All => m,
            FeatureSubset::Sqrt => (m as f64).sqrt().floor() as usize,
            FeatureSubset::Count(k) => k,
        };
        k.clamp(1, m.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrainConfig")]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub n_estimators: usize,
    /// Logistic regression only.
    pub max_iterations: usize,
    pub learning_rate: f64,
    /// `None` grows trees until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub l2_lambda: f64,
    pub feature_subset: FeatureSubset,
    /// Forest only: draw a bootstrap sample per tree.
    pub bootstrap: bool,
    pub random_state: u64,
}

impl TrainConfig {
    pub fn logistic(random_state: u64) -> Self {
        TrainConfig {
            model_kind: ModelKind::LogisticRegression,
            n_estimators: 100,
            max_iterations: 1000,
            learning_rate: 0.1,
            max_depth: None,
            min_samples_leaf: 1,
            l2_lambda: 0.0,
            feature_subset: FeatureSubset::All,
            bootstrap: false,
            random_state,
        }
    }

    pub fn forest(random_state: u64) -> Self {
        TrainConfig {
            model_kind: ModelKind::RandomForest,
            learning_rate: 0.3,
            feature_subset: FeatureSubset::Sqrt,
            bootstrap: true,
            ..TrainConfig::logistic(random_state)
        }
    }

    pub fn gbt(random_state: u64) -> Self {
        TrainConfig {
            model_kind: ModelKind::GradientBoosted,
            learning_rate: 0.3,
            max_depth: Some(6),
            l2_lambda: 1.0,
            ..TrainConfig::logistic(random_state)
        }
    }

    pub fn for_kind(kind: ModelKind, random_state: u64) -> Self {
        match kind {
            ModelKind::LogisticRegression => TrainConfig::logistic(random_state),
            ModelKind::RandomForest => TrainConfig::forest(random_state),
            ModelKind::GradientBoosted => TrainConfig::gbt(random_state),
        }
    }

    /// Boosting accepts zero rounds, which leaves the prior-only base score.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.n_estimators == 0 && self.model_kind != ModelKind::GradientBoosted {
            return bad("n_estimators must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be at least 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be non-negative");
        }
        if self.feature_subset == FeatureSubset::Count(0) {
            return bad("feature_subset count must be at least 1");
        }
        Ok(())
    }
}

/// Wire form: every field but the kind falls back to that kind's default.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrainConfig {
    model_kind: ModelKind,
    n_estimators: Option<usize>,
    max_iterations: Option<usize>,
    learning_rate: Option<f64>,
    #[serde(default, with = "double_option")]
    max_depth: Option<Option<usize>>,
    min_samples_leaf: Option<usize>,
    l2_lambda: Option<f64>,
    feature_subset: Option<FeatureSubset>,
    bootstrap: Option<bool>,
    random_state: Option<u64>,
}

mod double_option {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<usize>>, D::Error> {
        Option::<usize>::deserialize(d).map(Some)
    }
}

impl TryFrom<RawTrainConfig> for TrainConfig {
    type Error = ModelError;

    fn try_from(r: RawTrainConfig) -> Result<Self, Self::Error> {
        let d = TrainConfig::for_kind(r.model_kind, r.random_state.unwrap_or(0));
        let c = TrainConfig {
            model_kind: r.model_kind,
            n_estimators: r.n_estimators.unwrap_or(d.n_estimators),
            max_iterations: r.max_iterations.unwrap_or(d.max_iterations),
            learning_rate: r.learning_rate.unwrap_or(d.learning_rate),
            max_depth: r.max_depth.unwrap_or(d.max_depth),
            min_samples_leaf: r.min_samples_leaf.unwrap_or(d.min_samples_leaf),
            l2_lambda: r.l2_lambda.unwrap_or(d.l2_lambda),
            feature_subset: r.feature_subset.unwrap_or(d.feature_subset),
            bootstrap: r.bootstrap.unwrap_or(d.bootstrap),
            random_state: d.random_state,
        };
        c.validate()?;
        Ok(c)
    }
}

/// A trained classifier of any kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "structure", rename_all = "snake_case")]
pub enum Model {
    Logistic(LinearModel),
    Forest(Forest),
    Boosted(BoostedEnsemble),
}

impl Model {
    pub fn train(x: &Matrix, y: &[usize], n_classes: usize, config: &TrainConfig) -> Result<Model, ModelError> {
        Ok(match config.model_kind {
            ModelKind::LogisticRegression => Model::Logistic(train_logreg(x, y, n_classes, config)?),
            ModelKind::RandomForest => Model::Forest(train_forest(x, y, n_classes, config)?),
            ModelKind::GradientBoosted => Model::Boosted(train_gbt(x, y, n_classes, config)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Logistic(_) => ModelKind::LogisticRegression,
            Model::Forest(_) => ModelKind::RandomForest,
            Model::Boosted(_) => ModelKind::GradientBoosted,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Logistic(m) => m.weights.cols(),
            Model::Forest(m) => m.n_features,
            Model::Boosted(m) => m.n_features,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Logistic(m) => m.biases.len(),
            Model::Forest(m) => m.n_classes,
            Model::Boosted(m) => m.n_classes,
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        match self {
            Model::Logistic(m) => m.predict_proba(x),
            Model::Forest(m) => m.predict_proba(x),
            Model::Boosted(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, ModelError> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(p: &Matrix) -> Vec<usize> {
    (0..p.rows()).map(|i| argmax(p.row(i))).collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// In-place numerically stable softmax.
pub(crate) fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn check_training(x: &Matrix, y: &[usize], n_classes: usize) -> Result<(), ModelError> {
    if x.rows() != y.len() {
        return Err(ModelError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        });
    }
    if y.is_empty() || x.cols() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if !x.is_finite() {
        return Err(ModelError::NonFiniteInput);
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ModelError::LabelOutOfRange {
            label,
            classes: n_classes,
        });
    }
    Ok(())
}

pub(crate) fn check_input(x: &Matrix, n_features: usize) -> Result<(), ModelError> {
    if x.cols() != n_features {
        return Err(ModelError::DimensionMismatch {
            expected: n_features,
            found: x.cols(),
        });
    }
    if !x.is_finite() {
        return Err(ModelError::NonFiniteInput);
    }
    Ok(())
}
