use serde::{Deserialize, Serialize};

use crate::eval::{kfold_cv, CVConfig, CvSummary};
use crate::matrix::Matrix;
use crate::rng::{shuffle, stream};

use super::{FeatureSubset, Model, ModelError, TrainConfig};

/// One searched hyperparameter and its candidate values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    NEstimators(Vec<usize>),
    MaxIterations(Vec<usize>),
    LearningRate(Vec<f64>),
    MaxDepth(Vec<Option<usize>>),
    MinSamplesLeaf(Vec<usize>),
    L2Lambda(Vec<f64>),
    FeatureSubset(Vec<FeatureSubset>),
}

impl Param {
    fn len(&self) -> usize {
        match self {
            Param::NEstimators(v) | Param::MaxIterations(v) | Param::MinSamplesLeaf(v) => v.len(),
            Param::LearningRate(v) | Param::L2Lambda(v) => v.len(),
            Param::MaxDepth(v) => v.len(),
            Param::FeatureSubset(v) => v.len(),
        }
    }

    fn apply(&self, i: usize, c: &mut TrainConfig) {
        match self {
            Param::NEstimators(v) => c.n_estimators = v[i],
            Param::MaxIterations(v) => c.max_iterations = v[i],
            Param::LearningRate(v) => c.learning_rate = v[i],
            Param::MaxDepth(v) => c.max_depth = v[i],
            Param::MinSamplesLeaf(v) => c.min_samples_leaf = v[i],
            Param::L2Lambda(v) => c.l2_lambda = v[i],
            Param::FeatureSubset(v) => c.feature_subset = v[i],
        }
    }
}

/// The cartesian product of `params` applied on top of `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub base: TrainConfig,
    pub params: Vec<Param>,
}

impl SearchSpace {
    pub fn size(&self) -> usize {
        self.params.iter().map(Param::len).product()
    }

    /// Candidate `i` in enumeration order; the last parameter varies fastest.
    pub fn candidate(&self, mut i: usize) -> TrainConfig {
        let mut c = self.base.clone();
        for p in self.params.iter().rev() {
            p.apply(i % p.len(), &mut c);
            i /= p.len();
        }
        c
    }

    pub fn candidates(&self) -> Vec<TrainConfig> {
        (0..self.size()).map(|i| self.candidate(i)).collect()
    }

    /// `n_draws` distinct grid points in seeded random order.
    pub fn random_candidates(&self, n_draws: usize, seed: u64) -> Vec<TrainConfig> {
        let mut idx: Vec<usize> = (0..self.size()).collect();
        shuffle(&mut idx, &mut stream(seed, "random-search"));
        idx.into_iter().take(n_draws).map(|i| self.candidate(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: TrainConfig,
    pub best_score: f64,
    /// Every evaluated candidate with its cross-validation summary, in
    /// evaluation order.
    pub table: Vec<(TrainConfig, CvSummary)>,
}

fn evaluate(
    candidates: Vec<TrainConfig>,
    folds: &CVConfig,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
) -> Result<SearchResult, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::EmptySpace);
    }
    for c in &candidates {
        c.validate()?;
    }
    let names: Vec<String> = (0..n_classes).map(|c| c.to_string()).collect();
    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, config) in candidates.into_iter().enumerate() {
        let summary = kfold_cv(x, y, &names, folds, |tx, ty, vx| {
            Model::train(tx, ty, n_classes, &config)?.predict(vx)
        })?;
        if best.is_none_or(|(_, s)| summary.mean_f1_macro > s) {
            best = Some((i, summary.mean_f1_macro));
        }
        table.push((config, summary));
    }
    let (i, best_score) = best.expect("at least one candidate");
    Ok(SearchResult {
        best: table[i].0.clone(),
        best_score,
        table,
    })
}

/// Exhaustive search scored by mean k-fold macro F1; ties keep the earlier
/// candidate.
pub fn grid_search(
    space: &SearchSpace,
    folds: &CVConfig,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
) -> Result<SearchResult, ModelError> {
    evaluate(space.candidates(), folds, x, y, n_classes)
}

pub fn random_search(
    space: &SearchSpace,
    n_draws: usize,
    folds: &CVConfig,
    seed: u64,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
) -> Result<SearchResult, ModelError> {
    if n_draws == 0 {
        return Err(ModelError::EmptySpace);
    }
    evaluate(space.random_candidates(n_draws, seed), folds, x, y, n_classes)
}
