use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

use super::{check_input, check_training, softmax, ModelError, TrainConfig};

/// Multinomial logistic regression: `softmax(W x + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Classes × features.
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        LinearModel {
            weights: Matrix::zeros(n_classes, n_features),
            biases: vec![0.0; n_classes],
        }
    }

    fn margins_into(&self, row: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.biases[c] + self.weights.row(c).iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        check_input(x, self.weights.cols())?;
        let k = self.biases.len();
        let mut out = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            let p = out.row_mut(i);
            self.margins_into(x.row(i), p);
            softmax(p);
        }
        Ok(out)
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(&self.biases)
    }

    fn step(&self, grad: &LinearModel, rate: f64) -> LinearModel {
        let w: Vec<f64> = self
            .weights
            .as_slice()
            .iter()
            .zip(grad.weights.as_slice())
            .map(|(w, g)| w - rate * g)
            .collect();
        LinearModel {
            weights: Matrix::from_vec(self.weights.rows(), self.weights.cols(), w),
            biases: self.biases.iter().zip(&grad.biases).map(|(b, g)| b - rate * g).collect(),
        }
    }
}

/// Mean softmax cross-entropy plus `l2/2 · ‖W‖²`, and its gradient with
/// respect to weights and biases.
pub fn loss_and_gradient(model: &LinearModel, x: &Matrix, y: &[usize], l2: f64) -> (f64, LinearModel) {
    let k = model.biases.len();
    let n = x.rows() as f64;
    let mut grad = LinearModel::zeros(k, x.cols());
    let mut p = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..x.rows() {
        let row = x.row(i);
        model.margins_into(row, &mut p);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + p.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - p[y[i]];
        for c in 0..k {
            let r = (p[c] - lse).exp() - if c == y[i] { 1.0 } else { 0.0 };
            grad.biases[c] += r;
            for (g, v) in grad.weights.row_mut(c).iter_mut().zip(row) {
                *g += r * v;
            }
        }
    }
    for c in 0..k {
        grad.biases[c] /= n;
        let w = model.weights.row(c);
        for (g, wv) in grad.weights.row_mut(c).iter_mut().zip(w) {
            *g = *g / n + l2 * wv;
        }
    }
    let penalty = 0.5 * l2 * model.weights.as_slice().iter().map(|w| w * w).sum::<f64>();
    (total / n + penalty, grad)
}

/// Full-batch gradient descent from zero weights. A step that would raise
/// the loss is halved until it does not.
pub fn train_logreg(x: &Matrix, y: &[usize], n_classes: usize, config: &TrainConfig) -> Result<LinearModel, ModelError> {
    config.validate()?;
    check_training(x, y, n_classes)?;
    let mut model = LinearModel::zeros(n_classes, x.cols());
    let (mut current, mut grad) = loss_and_gradient(&model, x, y, config.l2_lambda);
    for _ in 0..config.max_iterations {
        if grad.params().fold(0.0f64, |m, g| m.max(g.abs())) < 1e-6 {
            break;
        }
        let mut rate = config.learning_rate;
        let next = loop {
            let candidate = model.step(&grad, rate);
            let (l, g) = loss_and_gradient(&candidate, x, y, config.l2_lambda);
            if l <= current {
                break Some((candidate, l, g));
            }
            rate /= 2.0;
            if rate < 1e-12 {
                break None;
            }
        };
        let Some(next) = next else { break };
        (model, current, grad) = next;
    }
    Ok(model)
}
