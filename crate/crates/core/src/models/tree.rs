//! CART trees grown over presorted feature orders.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::{stream, SimRng};

use super::{argmax, check_training, ModelError, TrainConfig};

/// Nodes live in an arena; the root is `nodes[0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class shares for classification trees, a single weight for
    /// regression trees.
    Leaf { value: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Majority class per row, for classification trees.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows()).map(|i| argmax(self.leaf_value(x.row(i)))).collect()
    }
}

/// Gini impurity `1 − Σ p²` of (weighted) class counts.
pub fn gini(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

/// What a tree fits. Node statistics are additive vectors whose first entry
/// is the sample weight used for `min_samples_leaf`.
pub(crate) trait Target {
    fn stats_len(&self) -> usize;
    fn accumulate(&self, row: usize, out: &mut [f64]);
    /// Split gain is `score(left) + score(right) − score(parent)`.
    fn score(&self, stats: &[f64]) -> f64;
    fn is_pure(&self, stats: &[f64]) -> bool;
    fn leaf(&self, stats: &[f64]) -> Vec<f64>;
}

pub(crate) struct Classes<'a> {
    pub y: &'a [usize],
    pub weights: &'a [f64],
    pub n_classes: usize,
}

impl Target for Classes<'_> {
    fn stats_len(&self) -> usize {
        1 + self.n_classes
    }

    fn accumulate(&self, row: usize, out: &mut [f64]) {
        out[0] += self.weights[row];
        out[1 + self.y[row]] += self.weights[row];
    }

    // Weighted impurity decrease: the W terms of W·gini cancel in the gain.
    fn score(&self, s: &[f64]) -> f64 {
        if s[0] <= 0.0 {
            return 0.0;
        }
        s[1..].iter().map(|c| c * c).sum::<f64>() / s[0]
    }

    fn is_pure(&self, s: &[f64]) -> bool {
        s[1..].iter().filter(|&&c| c > 0.0).count() <= 1
    }

    fn leaf(&self, s: &[f64]) -> Vec<f64> {
        s[1..].iter().map(|c| c / s[0]).collect()
    }
}

/// Second-order regression on gradients and hessians.
pub(crate) struct Newton<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
}

impl Target for Newton<'_> {
    fn stats_len(&self) -> usize {
        3
    }

    fn accumulate(&self, row: usize, out: &mut [f64]) {
        out[0] += 1.0;
        out[1] += self.grad[row];
        out[2] += self.hess[row];
    }

    fn score(&self, s: &[f64]) -> f64 {
        0.5 * s[1] * s[1] / (s[2] + self.lambda)
    }

    fn is_pure(&self, _: &[f64]) -> bool {
        false
    }

    fn leaf(&self, s: &[f64]) -> Vec<f64> {
        vec![-s[1] / (s[2] + self.lambda)]
    }
}

/// Row indices sorted by each feature (ties by row index), computed once
/// per dataset and filtered per tree.
pub(crate) struct Presorted {
    orders: Vec<Vec<usize>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let orders = (0..x.cols())
            .map(|f| {
                let mut idx: Vec<usize> = (0..x.rows()).collect();
                idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { orders }
    }

    fn keep(&self, include: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
        self.orders
            .iter()
            .map(|o| o.iter().copied().filter(|&i| include(i)).collect())
            .collect()
    }
}

pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: f64,
    pub features_per_split: usize,
    pub seed: u64,
}

impl GrowParams {
    pub fn from_config(config: &TrainConfig, n_features: usize) -> Self {
        GrowParams {
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf as f64,
            features_per_split: config.feature_subset.resolve(n_features),
            seed: config.random_state,
        }
    }
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

const MIN_GAIN: f64 = 1e-12;

/// Grows a tree on the rows for which `include` holds.
pub(crate) fn grow<T: Target>(
    x: &Matrix,
    target: &T,
    presorted: &Presorted,
    include: impl Fn(usize) -> bool,
    params: &GrowParams,
) -> Tree {
    let m = x.cols();
    let data = x.as_slice();
    let mut orders = presorted.keep(include);
    let n = orders.first().map_or(0, Vec::len);
    let len = target.stats_len();
    let mut rng = stream(params.seed, "tree-features");
    let mut candidates: Vec<usize> = (0..m).collect();
    let mut goes_left = vec![false; x.rows()];
    let mut scratch = Vec::with_capacity(n);
    let mut left = vec![0.0; len];
    let mut right = vec![0.0; len];

    let mut nodes = vec![Node::Leaf { value: Vec::new() }];
    // (node, start, end, depth)
    let mut stack = vec![(0usize, 0usize, n, 0usize)];
    while let Some((id, start, end, depth)) = stack.pop() {
        let mut parent = vec![0.0; len];
        if m > 0 {
            for &i in &orders[0][start..end] {
                target.accumulate(i, &mut parent);
            }
        }
        let splittable = m > 0
            && params.max_depth.is_none_or(|d| depth < d)
            && !target.is_pure(&parent)
            && parent[0] >= 2.0 * params.min_samples_leaf;
        let best = if splittable {
            let features = sample_features(&mut candidates, params.features_per_split, &mut rng);
            let parent_score = target.score(&parent);
            let mut best: Option<Best> = None;
            for f in features {
                let order = &orders[f][start..end];
                left.iter_mut().for_each(|v| *v = 0.0);
                for w in 0..order.len() - 1 {
                    let (a, b) = (order[w], order[w + 1]);
                    target.accumulate(a, &mut left);
                    let (va, vb) = (data[a * m + f], data[b * m + f]);
                    if va == vb {
                        continue;
                    }
                    for j in 0..len {
                        right[j] = parent[j] - left[j];
                    }
                    if left[0] < params.min_samples_leaf || right[0] < params.min_samples_leaf {
                        continue;
                    }
                    let gain = target.score(&left) + target.score(&right) - parent_score;
                    let floor = best.as_ref().map_or(MIN_GAIN, |b| b.gain + 1e-12 * b.gain.abs().max(1.0));
                    if gain > floor {
                        let mut threshold = va + (vb - va) / 2.0;
                        if threshold >= vb {
                            threshold = va;
                        }
                        best = Some(Best {
                            gain,
                            feature: f,
                            threshold,
                        });
                    }
                }
            }
            best
        } else {
            None
        };

        let Some(best) = best else {
            nodes[id] = Node::Leaf {
                value: target.leaf(&parent),
            };
            continue;
        };
        for &i in &orders[best.feature][start..end] {
            goes_left[i] = data[i * m + best.feature] <= best.threshold;
        }
        let mut n_left = 0;
        for order in orders.iter_mut() {
            let seg = &mut order[start..end];
            scratch.clear();
            let mut w = 0;
            for r in 0..seg.len() {
                let i = seg[r];
                if goes_left[i] {
                    seg[w] = i;
                    w += 1;
                } else {
                    scratch.push(i);
                }
            }
            seg[w..].copy_from_slice(&scratch);
            n_left = w;
        }
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        stack.push((r, start + n_left, end, depth + 1));
        stack.push((l, start, start + n_left, depth + 1));
    }
    Tree { nodes }
}

/// Draws `k` distinct features and returns them ascending, so ties between
/// equal gains resolve to the lowest feature index.
fn sample_features(pool: &mut [usize], k: usize, rng: &mut SimRng) -> Vec<usize> {
    if k >= pool.len() {
        let mut all = pool.to_vec();
        all.sort_unstable();
        return all;
    }
    use rand::Rng;
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Classification tree with per-row sample weights; rows of weight 0 are
/// left out. Feature sampling is seeded by `config.random_state`.
pub fn train_tree(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<Tree, ModelError> {
    config.validate()?;
    check_training(x, y, n_classes)?;
    if weights.len() != y.len() {
        return Err(ModelError::LengthMismatch {
            rows: weights.len(),
            labels: y.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !weights.iter().any(|w| *w > 0.0) {
        return Err(ModelError::InvalidConfig("sample weights must be non-negative and not all zero".into()));
    }
    let presorted = Presorted::new(x);
    Ok(grow_classifier(x, y, weights, n_classes, &presorted, &GrowParams::from_config(config, x.cols())))
}

pub(crate) fn grow_classifier(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    presorted: &Presorted,
    params: &GrowParams,
) -> Tree {
    let target = Classes { y, weights, n_classes };
    grow(x, &target, presorted, |i| weights[i] > 0.0, params)
}
