use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream};

use super::tree::{grow_classifier, GrowParams, Presorted};
use super::{argmax, check_input, check_training, ModelError, TrainConfig, Tree};

/// Bagged CART trees voting by class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Per-tree seed driving its bootstrap draw and feature sampling.
    pub seeds: Vec<u64>,
}

impl Forest {
    /// Vote shares per class.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        check_input(x, self.n_features)?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        let total = self.trees.len() as f64;
        for i in 0..x.rows() {
            let row = x.row(i);
            let votes = out.row_mut(i);
            for t in &self.trees {
                votes[argmax(t.leaf_value(row))] += 1.0;
            }
            votes.iter_mut().for_each(|v| *v /= total);
        }
        Ok(out)
    }
}

pub fn train_forest(x: &Matrix, y: &[usize], n_classes: usize, config: &TrainConfig) -> Result<Forest, ModelError> {
    config.validate()?;
    check_training(x, y, n_classes)?;
    let n = y.len();
    let presorted = Presorted::new(x);
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut seeds = Vec::with_capacity(config.n_estimators);
    for t in 0..config.n_estimators {
        let seed = derive_seed(config.random_state, &format!("forest-tree-{t}"));
        let mut weights = vec![0.0; n];
        if config.bootstrap {
            let mut rng = stream(seed, "bootstrap");
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1.0;
            }
        } else {
            weights.fill(1.0);
        }
        let params = GrowParams {
            seed,
            ..GrowParams::from_config(config, x.cols())
        };
        trees.push(grow_classifier(x, y, &weights, n_classes, &presorted, &params));
        seeds.push(seed);
    }
    Ok(Forest {
        n_classes,
        n_features: x.cols(),
        trees,
        seeds,
    })
}
