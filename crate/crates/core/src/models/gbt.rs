use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::derive_seed;

use super::tree::{grow, GrowParams, Newton, Presorted};
use super::{check_input, check_training, softmax, ModelError, TrainConfig, Tree};

/// Softmax boosting: `rounds[r][k]` is the tree for class `k` in round `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub n_classes: usize,
    pub n_features: usize,
    pub learning_rate: f64,
    /// Log class priors.
    pub base_score: Vec<f64>,
    pub rounds: Vec<Vec<Tree>>,
}

impl BoostedEnsemble {
    pub fn margins(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        check_input(x, self.n_features)?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for i in 0..x.rows() {
            let row = x.row(i);
            let f = out.row_mut(i);
            f.copy_from_slice(&self.base_score);
            for round in &self.rounds {
                for (k, t) in round.iter().enumerate() {
                    f[k] += self.learning_rate * t.leaf_value(row)[0];
                }
            }
        }
        Ok(out)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        let mut p = self.margins(x)?;
        for i in 0..p.rows() {
            softmax(p.row_mut(i));
        }
        Ok(p)
    }
}

/// Cross-entropy of one row's margins against its label.
pub fn softmax_cross_entropy(margins: &[f64], label: usize) -> f64 {
    let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + margins.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - margins[label]
}

/// Gradient `p − onehot` and diagonal hessian `p(1 − p)` of
/// [`softmax_cross_entropy`] with respect to the margins.
pub fn softmax_grad_hess(margins: &[f64], label: usize) -> (Vec<f64>, Vec<f64>) {
    let mut p = margins.to_vec();
    softmax(&mut p);
    let g = p.iter().enumerate().map(|(k, pk)| pk - if k == label { 1.0 } else { 0.0 }).collect();
    let h = p.iter().map(|pk| pk * (1.0 - pk)).collect();
    (g, h)
}

const MIN_HESSIAN: f64 = 1e-16;

pub fn train_gbt(x: &Matrix, y: &[usize], n_classes: usize, config: &TrainConfig) -> Result<BoostedEnsemble, ModelError> {
    config.validate()?;
    check_training(x, y, n_classes)?;
    let n = y.len();
    let mut counts = vec![0usize; n_classes];
    for &l in y {
        counts[l] += 1;
    }
    let base_score: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).max(1e-12).ln()).collect();
    let presorted = Presorted::new(x);
    let mut margins = Matrix::zeros(n, n_classes);
    for i in 0..n {
        margins.row_mut(i).copy_from_slice(&base_score);
    }
    let mut grad = vec![vec![0.0; n]; n_classes];
    let mut hess = vec![vec![0.0; n]; n_classes];
    let mut rounds = Vec::with_capacity(config.n_estimators);
    for r in 0..config.n_estimators {
        for i in 0..n {
            let (g, h) = softmax_grad_hess(margins.row(i), y[i]);
            for k in 0..n_classes {
                grad[k][i] = g[k];
                hess[k][i] = h[k].max(MIN_HESSIAN);
            }
        }
        let mut trees = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let target = Newton {
                grad: &grad[k],
                hess: &hess[k],
                lambda: config.l2_lambda,
            };
            let params = GrowParams {
                seed: derive_seed(config.random_state, &format!("gbt-{r}-{k}")),
                ..GrowParams::from_config(config, x.cols())
            };
            let tree = grow(x, &target, &presorted, |_| true, &params);
            for i in 0..n {
                let f = margins.row_mut(i);
                f[k] += config.learning_rate * tree.leaf_value(x.row(i))[0];
            }
            trees.push(tree);
        }
        rounds.push(trees);
    }
    Ok(BoostedEnsemble {
        n_classes,
        n_features: x.cols(),
        learning_rate: config.learning_rate,
        base_score,
        rounds,
    })
}

/// Squared-error boosting, used by the demand forecaster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedRegressor {
    pub n_features: usize,
    pub learning_rate: f64,
    /// Mean of the training targets.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl BoostedRegressor {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_input(x, self.n_features)?;
        Ok((0..x.rows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| self.learning_rate * t.leaf_value(row)[0]).sum::<f64>()
    }
}

pub fn train_gbt_regressor(x: &Matrix, y: &[f64], config: &TrainConfig) -> Result<BoostedRegressor, ModelError> {
    config.validate()?;
    check_training(x, &vec![0; y.len()], 1)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteInput);
    }
    let n = y.len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let presorted = Presorted::new(x);
    let mut pred = vec![base_score; n];
    let hess = vec![1.0; n];
    let mut grad = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_estimators);
    for r in 0..config.n_estimators {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let target = Newton {
            grad: &grad,
            hess: &hess,
            lambda: config.l2_lambda,
        };
        let params = GrowParams {
            seed: derive_seed(config.random_state, &format!("gbr-{r}")),
            ..GrowParams::from_config(config, x.cols())
        };
        let tree = grow(x, &target, &presorted, |_| true, &params);
        for i in 0..n {
            pred[i] += config.learning_rate * tree.leaf_value(x.row(i))[0];
        }
        trees.push(tree);
    }
    Ok(BoostedRegressor {
        n_features: x.cols(),
        learning_rate: config.learning_rate,
        base_score,
        trees,
    })
}
