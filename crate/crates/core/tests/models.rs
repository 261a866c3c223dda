use std::sync::OnceLock;

use gridledger_core::eval::{accuracy, CVConfig};
use gridledger_core::models::*;
use gridledger_core::pipeline::{fit_transform, stratified_split};
use gridledger_core::simgen::{generate, ScenarioConfig};
use gridledger_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(lo..hi)).collect())
}

/// 200 rows, 4 features, label = [x2 > 0.3].
fn stump_data() -> (Matrix, Vec<usize>) {
    let x = uniform(&mut rng(11), 200, 4, -2.0, 2.0);
    let y = (0..200).map(|i| usize::from(x.get(i, 2) > 0.3)).collect();
    (x, y)
}

fn all_configs(seed: u64) -> [TrainConfig; 3] {
    [TrainConfig::logistic(seed), TrainConfig::forest(seed), TrainConfig::gbt(seed)]
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

#[test]
fn logistic_separates_two_clusters() {
    let x = Matrix::from_rows(&[[0.0, 0.1], [0.2, -0.3], [-0.4, 0.0], [3.0, 2.8], [2.6, 3.3], [3.1, 3.0]]);
    let y = [0, 0, 0, 1, 1, 1];
    let m = train_logreg(&x, &y, 2, &TrainConfig::logistic(0)).unwrap();
    let pred = Model::Logistic(m).predict(&x).unwrap();
    assert_eq!(accuracy(&y, &pred), 1.0);
}

#[test]
fn logistic_on_zero_features_is_uniform() {
    let x = Matrix::zeros(6, 3);
    let y = [0, 1, 2, 0, 1, 2];
    let m = train_logreg(&x, &y, 3, &TrainConfig::logistic(0)).unwrap();
    let p = m.predict_proba(&x).unwrap();
    assert!(p.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for problem in 0..20 {
        let mut r = rng(100 + problem);
        let x = uniform(&mut r, 20, 3, -1.5, 1.5);
        let y: Vec<usize> = (0..20).map(|_| r.random_range(0..3)).collect();
        let model = LinearModel {
            weights: uniform(&mut r, 3, 3, -1.0, 1.0),
            biases: (0..3).map(|_| r.random_range(-1.0..1.0)).collect(),
        };
        let l2 = 0.1;
        let (_, grad) = loss_and_gradient(&model, &x, &y, l2);
        for c in 0..3 {
            for j in 0..3 {
                let mut up = model.clone();
                let mut down = model.clone();
                up.weights.set(c, j, model.weights.get(c, j) + eps);
                down.weights.set(c, j, model.weights.get(c, j) - eps);
                let fd = (loss_and_gradient(&up, &x, &y, l2).0 - loss_and_gradient(&down, &x, &y, l2).0) / (2.0 * eps);
                worst = worst.max(rel_err(grad.weights.get(c, j), fd));
            }
            let mut up = model.clone();
            let mut down = model.clone();
            up.biases[c] += eps;
            down.biases[c] -= eps;
            let fd = (loss_and_gradient(&up, &x, &y, l2).0 - loss_and_gradient(&down, &x, &y, l2).0) / (2.0 * eps);
            worst = worst.max(rel_err(grad.biases[c], fd));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn boosting_gradient_and_hessian_match_central_differences() {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for problem in 0..20 {
        let mut r = rng(200 + problem);
        let k = r.random_range(2..5);
        let margins: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
        let label = r.random_range(0..k);
        let (g, h) = softmax_grad_hess(&margins, label);
        for j in 0..k {
            let (mut up, mut down) = (margins.clone(), margins.clone());
            up[j] += eps;
            down[j] -= eps;
            let fd_g = (softmax_cross_entropy(&up, label) - softmax_cross_entropy(&down, label)) / (2.0 * eps);
            let fd_h = (softmax_grad_hess(&up, label).0[j] - softmax_grad_hess(&down, label).0[j]) / (2.0 * eps);
            worst = worst.max(rel_err(g[j], fd_g)).max(rel_err(h[j], fd_h));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn gini_examples() {
    assert_eq!(gini(&[4.0]), 0.0);
    assert_eq!(gini(&[5.0, 5.0]), 0.5);
    let oracle = 1.0 - (0.5f64 * 0.5 + 0.25 * 0.25 + 0.25 * 0.25);
    assert_eq!(gini(&[2.0, 1.0, 1.0]), oracle);
    assert_eq!(oracle, 0.625);
}

#[test]
fn pure_node_is_a_single_leaf() {
    let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
    let t = train_tree(&x, &[1, 1, 1], &[1.0; 3], 2, &TrainConfig::forest(0)).unwrap();
    assert_eq!(t.nodes, vec![Node::Leaf { value: vec![0.0, 1.0] }]);
}

#[test]
fn thresholds_are_midpoints_and_ties_pick_the_lowest_feature() {
    let x = Matrix::from_rows(&[[1.0, 10.0], [2.0, 20.0], [4.0, 40.0], [8.0, 80.0]]);
    let cfg = TrainConfig {
        feature_subset: FeatureSubset::All,
        ..TrainConfig::forest(0)
    };
    let t = train_tree(&x, &[0, 0, 1, 1], &[1.0; 4], 2, &cfg).unwrap();
    assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold: 3.0, .. }));
    assert_eq!(t.depth(), 1);
}

#[test]
fn trees_respect_max_depth() {
    let (x, y) = stump_data();
    let noisy: Vec<usize> = y.iter().enumerate().map(|(i, &l)| if i % 7 == 0 { 1 - l } else { l }).collect();
    for depth in 1..4 {
        let cfg = TrainConfig {
            max_depth: Some(depth),
            ..TrainConfig::forest(1)
        };
        let t = train_tree(&x, &noisy, &[1.0; 200], 2, &cfg).unwrap();
        assert!(t.depth() <= depth);
    }
}

#[test]
fn single_unbagged_tree_forest_equals_the_tree() {
    let (x, y) = stump_data();
    let cfg = TrainConfig {
        n_estimators: 1,
        bootstrap: false,
        ..TrainConfig::forest(5)
    };
    let f = train_forest(&x, &y, 2, &cfg).unwrap();
    let tree_cfg = TrainConfig {
        random_state: f.seeds[0],
        ..cfg.clone()
    };
    let t = train_tree(&x, &y, &[1.0; 200], 2, &tree_cfg).unwrap();
    assert_eq!(f.trees[0], t);
    assert_eq!(Model::Forest(f).predict(&x).unwrap(), t.predict(&x));
}

#[test]
fn trainers_are_deterministic() {
    let (x, y) = stump_data();
    for cfg in all_configs(9) {
        let a = Model::train(&x, &y, 2, &cfg).unwrap();
        let b = Model::train(&x, &y, 2, &cfg).unwrap();
        assert_eq!(a, b, "{}", cfg.model_kind);
    }
    let other = Model::train(&x, &y, 2, &TrainConfig::forest(10)).unwrap();
    assert_ne!(other, Model::train(&x, &y, 2, &TrainConfig::forest(9)).unwrap());
}

#[test]
fn forest_keeps_pace_with_a_single_tree() {
    let mut r = rng(31);
    let x = uniform(&mut r, 100, 5, 0.0, 1.0);
    let y: Vec<usize> = (0..100)
        .map(|i| usize::from(x.get(i, 0) + x.get(i, 3) > 1.0) + usize::from(x.get(i, 1) > 0.7))
        .collect();
    let tree = train_tree(&x, &y, &[1.0; 100], 3, &TrainConfig::forest(2)).unwrap();
    let forest = train_forest(&x, &y, 3, &TrainConfig::forest(2)).unwrap();
    let tree_acc = accuracy(&y, &tree.predict(&x));
    let forest_acc = accuracy(&y, &Model::Forest(forest).predict(&x).unwrap());
    assert!(forest_acc >= tree_acc - 0.05, "forest {forest_acc} tree {tree_acc}");
}

#[test]
fn zero_rounds_predict_the_priors() {
    let x = uniform(&mut rng(4), 10, 2, 0.0, 1.0);
    let y = [0, 0, 0, 0, 0, 1, 1, 1, 2, 2];
    let cfg = TrainConfig {
        n_estimators: 0,
        ..TrainConfig::gbt(0)
    };
    let m = train_gbt(&x, &y, 3, &cfg).unwrap();
    let p = m.predict_proba(&x).unwrap();
    for i in 0..10 {
        for (c, prior) in [0.5, 0.3, 0.2].into_iter().enumerate() {
            assert!((p.get(i, c) - prior).abs() < 1e-12);
        }
    }
    assert!(train_forest(&x, &y, 3, &TrainConfig { n_estimators: 0, ..TrainConfig::forest(0) }).is_err());
}

#[test]
fn boosting_lowers_training_loss() {
    let mut r = rng(8);
    let x = uniform(&mut r, 150, 3, -1.0, 1.0);
    let y: Vec<usize> = (0..150)
        .map(|i| if r.random_bool(0.2) { r.random_range(0..3) } else { usize::from(x.get(i, 0) > 0.0) + usize::from(x.get(i, 1) > 0.5) })
        .collect();
    let loss = |rounds| {
        let m = train_gbt(&x, &y, 3, &TrainConfig { n_estimators: rounds, ..TrainConfig::gbt(1) }).unwrap();
        let f = m.margins(&x).unwrap();
        (0..150).map(|i| softmax_cross_entropy(f.row(i), y[i])).sum::<f64>() / 150.0
    };
    assert!(loss(100) < loss(1));
}

#[test]
fn newton_leaf_weights_match_hand_computation() {
    // Priors 2/3 and 1/3. For class 0, g = p0 - y0 is -1/3 on the four
    // class-0 rows and 2/3 on the two class-1 rows; h = p0(1 - p0) = 2/9.
    // The split at 4.5 separates the classes, so with lambda = 1 the left
    // leaf is (4/3) / (8/9 + 1) = 12/17 and the right one is
    // -(4/3) / (4/9 + 1) = -12/13. Class 1 mirrors class 0.
    let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]);
    let y = [0, 0, 0, 0, 1, 1];
    let cfg = TrainConfig {
        n_estimators: 1,
        max_depth: Some(1),
        ..TrainConfig::gbt(0)
    };
    let m = train_gbt(&x, &y, 2, &cfg).unwrap();
    let expect = [(12.0 / 17.0, -12.0 / 13.0), (-12.0 / 17.0, 12.0 / 13.0)];
    for (k, (l, r)) in expect.into_iter().enumerate() {
        let t = &m.rounds[0][k];
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold: 4.5, .. }));
        assert!((t.leaf_value(&[1.0])[0] - l).abs() < 1e-12);
        assert!((t.leaf_value(&[6.0])[0] - r).abs() < 1e-12);
    }
    assert!((m.base_score[0] - (2.0f64 / 3.0).ln()).abs() < 1e-15);
}

#[test]
fn every_model_overfits_a_stump() {
    let (x, y) = stump_data();
    for cfg in all_configs(3) {
        let m = Model::train(&x, &y, 2, &cfg).unwrap();
        let acc = accuracy(&y, &m.predict(&x).unwrap());
        assert!(acc >= 0.95, "{}: {acc}", cfg.model_kind);
    }
}

#[test]
fn probabilities_lie_on_the_simplex_and_are_pure() {
    let mut r = rng(21);
    let x = uniform(&mut r, 80, 3, -1.0, 1.0);
    let y: Vec<usize> = (0..80).map(|_| r.random_range(0..3)).collect();
    let probe = uniform(&mut r, 40, 3, -3.0, 3.0);
    let dup = Matrix::from_rows(&[x.row(5), x.row(5)]);
    for cfg in all_configs(4) {
        let m = Model::train(&x, &y, 3, &cfg).unwrap();
        let p = m.predict_proba(&probe).unwrap();
        for i in 0..p.rows() {
            let row = p.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let d = m.predict_proba(&dup).unwrap();
        assert_eq!(d.row(0), d.row(1));
    }
}

#[test]
fn input_validation() {
    let (x, y) = stump_data();
    let m = Model::train(&x, &y, 2, &TrainConfig::logistic(0)).unwrap();
    assert!(matches!(
        m.predict(&Matrix::zeros(2, 3)),
        Err(ModelError::DimensionMismatch { expected: 4, found: 3 })
    ));
    let mut bad = x.clone();
    bad.set(0, 0, f64::NAN);
    for cfg in all_configs(0) {
        assert!(matches!(Model::train(&bad, &y, 2, &cfg), Err(ModelError::NonFiniteInput)));
    }
    assert!(matches!(m.predict(&bad), Err(ModelError::NonFiniteInput)));
    assert!(matches!(
        Model::train(&x, &y, 1, &TrainConfig::gbt(0)),
        Err(ModelError::LabelOutOfRange { label: 1, classes: 1 })
    ));
    let bad_rate = TrainConfig { learning_rate: 1.5, ..TrainConfig::gbt(0) };
    assert!(matches!(Model::train(&x, &y, 2, &bad_rate), Err(ModelError::InvalidConfig(_))));
}

#[test]
fn train_config_json_fills_kind_defaults() {
    let c: TrainConfig = serde_json::from_str(r#"{"model_kind":"gbt","n_estimators":20}"#).unwrap();
    assert_eq!(c, TrainConfig { n_estimators: 20, ..TrainConfig::gbt(0) });
    let f: TrainConfig = serde_json::from_str(r#"{"model_kind":"forest","max_depth":null,"random_state":5}"#).unwrap();
    assert_eq!(f, TrainConfig::forest(5));
    let d: TrainConfig = serde_json::from_str(r#"{"model_kind":"forest","max_depth":4}"#).unwrap();
    assert_eq!(d.max_depth, Some(4));
    for cfg in all_configs(7) {
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
    assert!(serde_json::from_str::<TrainConfig>(r#"{"model_kind":"gbt","learning_rate":0}"#).is_err());
    assert!(serde_json::from_str::<TrainConfig>(r#"{"model_kind":"gbt","depth":3}"#).is_err());
}

fn xor_data() -> (Matrix, Vec<usize>) {
    let mut r = rng(77);
    let x = uniform(&mut r, 120, 2, -1.0, 1.0);
    let y = (0..120).map(|i| usize::from((x.get(i, 0) > 0.0) != (x.get(i, 1) > 0.0))).collect();
    (x, y)
}

#[test]
fn search_over_one_point_returns_it() {
    let (x, y) = xor_data();
    let space = SearchSpace {
        base: TrainConfig { n_estimators: 5, ..TrainConfig::gbt(0) },
        params: vec![],
    };
    let r = grid_search(&space, &CVConfig::default(), &x, &y, 2).unwrap();
    assert_eq!(r.best, space.base);
    assert_eq!(r.table.len(), 1);
}

#[test]
fn grid_search_picks_the_dominating_candidate() {
    let (x, y) = xor_data();
    let space = SearchSpace {
        base: TrainConfig { n_estimators: 10, ..TrainConfig::gbt(0) },
        params: vec![Param::MaxDepth(vec![Some(1), Some(2)])],
    };
    let r = grid_search(&space, &CVConfig { k: 3, ..CVConfig::default() }, &x, &y, 2).unwrap();
    let (a, b) = (&r.table[0].1, &r.table[1].1);
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        assert!(fb.macro_avg.f1 > fa.macro_avg.f1);
    }
    assert_eq!(r.best.max_depth, Some(2));
    assert_eq!(r.best_score, b.mean_f1_macro);

    let empty = SearchSpace {
        base: TrainConfig::gbt(0),
        params: vec![Param::LearningRate(vec![])],
    };
    assert!(matches!(grid_search(&empty, &CVConfig::default(), &x, &y, 2), Err(ModelError::EmptySpace)));
}

#[test]
fn grid_enumeration_and_random_draws() {
    let space = SearchSpace {
        base: TrainConfig::forest(0),
        params: vec![
            Param::NEstimators(vec![10, 20]),
            Param::MinSamplesLeaf(vec![1, 2, 4]),
        ],
    };
    let all = space.candidates();
    assert_eq!(all.len(), 6);
    assert_eq!((all[1].n_estimators, all[1].min_samples_leaf), (10, 2));
    assert_eq!((all[3].n_estimators, all[3].min_samples_leaf), (20, 1));
    let a = space.random_candidates(4, 99);
    assert_eq!(a, space.random_candidates(4, 99));
    assert_eq!(a.len(), 4);
    assert!(a.iter().all(|c| all.contains(c)));
    assert_eq!(space.random_candidates(10, 99).len(), 6);
}

#[test]
fn artifacts_round_trip_and_check_the_manifest() {
    let (x, y) = stump_data();
    let dir = tempfile::tempdir().unwrap();
    for cfg in all_configs(2) {
        let model = Model::train(&x, &y, 2, &cfg).unwrap();
        let art = ModelArtifact {
            config: cfg.clone(),
            manifest_hash: "ab".repeat(32),
            class_names: vec!["no".into(), "yes".into()],
            model,
        };
        let path = dir.path().join(format!("{}.json", cfg.model_kind));
        art.save(&path).unwrap();
        let back = ModelArtifact::load_for(&path, &"ab".repeat(32)).unwrap();
        assert_eq!(back, art);
        assert_eq!(back.predict_proba(&x).unwrap(), art.predict_proba(&x).unwrap());
        assert!(matches!(
            ModelArtifact::load_for(&path, &"cd".repeat(32)),
            Err(ModelError::ManifestMismatch { .. })
        ));
    }
}

struct StatusData {
    train_x: Matrix,
    train_y: Vec<usize>,
    test_x: Matrix,
    test_y: Vec<usize>,
}

fn status_data() -> &'static StatusData {
    static DATA: OnceLock<StatusData> = OnceLock::new();
    DATA.get_or_init(|| {
        let rows = generate(&ScenarioConfig {
            seed: 12,
            n_transactions: 3000,
            ..ScenarioConfig::default()
        })
        .unwrap()
        .rows();
        let labels: Vec<String> = rows.iter().map(|r| r.transaction_status.to_string()).collect();
        let split = stratified_split(&labels, 0.25, 12).unwrap();
        let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
        let pick_l = |idx: &[usize]| idx.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>();
        let (prep, train) = fit_transform(&pick(&split.train), &pick_l(&split.train)).unwrap();
        let test = prep.transform(&pick(&split.test), Some(&pick_l(&split.test))).unwrap();
        StatusData {
            train_x: train.x,
            train_y: train.y,
            test_x: test.x,
            test_y: test.y,
        }
    })
}

#[test]
fn status_labels_stay_at_chance() {
    let d = status_data();
    for cfg in all_configs(42) {
        let m = Model::train(&d.train_x, &d.train_y, 3, &cfg).unwrap();
        let acc = accuracy(&d.test_y, &m.predict(&d.test_x).unwrap());
        assert!((0.28..=0.40).contains(&acc), "{}: {acc}", cfg.model_kind);
    }
}
