//! Random forest: bagged CART trees with sqrt(d) feature candidates per
//! split and majority voting, ties to the lowest class index.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{TreeBuilder, TreeConfig, TreeNode};
use super::{argmax_first, validate_prediction_width, Classifier, ModelEnvelope, Result};
use crate::Error;

/// Random-forest hyperparameters. `features_per_split` defaults to
/// `floor(sqrt(d))` at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// A fitted random forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    trees: Vec<TreeNode>,
    class_count: usize,
    feature_count: usize,
}

pub(super) fn fit(
    config: &ForestConfig,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<RandomForestModel> {
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let d = features.ncols();
    let features_per_split = config
        .features_per_split
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split,
        seed: config.seed,
    };
    let n = features.nrows();
    // Trees are independent given their per-tree seed, so fitting them in
    // parallel and collecting in index order is deterministic.
    let trees: Vec<TreeNode> = (0..config.n_trees)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(tree_index as u64));
            let indices: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let builder = TreeBuilder::new(
                features,
                labels,
                class_count,
                &tree_config,
                Some(features_per_split),
            );
            builder.build(&indices, &mut rng)
        })
        .collect();
    Ok(RandomForestModel {
        trees,
        class_count,
        feature_count: d,
    })
}

impl RandomForestModel {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    fn vote_fractions(&self, rows: &Array2<f64>) -> Array2<f64> {
        let mut votes = Array2::zeros((rows.nrows(), self.class_count));
        for tree in &self.trees {
            for (r, row) in rows.outer_iter().enumerate() {
                let model = TreeVoteView { node: tree };
                votes[[r, model.vote(row, self.class_count)]] += 1.0;
            }
        }
        votes / self.trees.len() as f64
    }
}

struct TreeVoteView<'a> {
    node: &'a TreeNode,
}

impl TreeVoteView<'_> {
    fn vote(&self, row: ndarray::ArrayView1<'_, f64>, _class_count: usize) -> usize {
        let mut current = self.node;
        loop {
            match current {
                TreeNode::Leaf { class_counts } => {
                    return argmax_first(class_counts.iter().map(|&c| c as f64));
                }
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    current = if row[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

impl Classifier for RandomForestModel {
    fn kind(&self) -> &'static str {
        "random_forest"
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>> {
        validate_prediction_width(self.feature_count, rows)?;
        let fractions = self.vote_fractions(rows);
        Ok(fractions
            .outer_iter()
            .map(|row| argmax_first(row.iter().copied()))
            .collect())
    }

    fn predict_proba(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        validate_prediction_width(self.feature_count, rows)?;
        Ok(self.vote_fractions(rows))
    }

    fn write_model(&self, writer: &mut dyn std::io::Write) -> Result<()> {
        let envelope = ModelEnvelope {
            format_version: 1,
            kind: "random_forest".into(),
            feature_count: self.feature_count,
            class_count: self.class_count,
            payload: Some(serde_json::to_value(self)?),
        };
        super::write_envelope(writer, &envelope)
    }
}

pub(super) fn read(envelope: &ModelEnvelope) -> Result<RandomForestModel> {
    let payload = envelope
        .payload
        .as_ref()
        .ok_or_else(|| Error::ModelFormat("random_forest model missing payload".into()))?;
    Ok(serde_json::from_value(payload.clone())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ClassifierSpec;
    use ndarray::array;

    #[test]
    fn majority_vote_and_tie_rule() {
        // Hand-build a 3-tree forest voting [A, A, B] and a 2-tree tie.
        let leaf_a = TreeNode::Leaf { class_counts: vec![5, 0] };
        let leaf_b = TreeNode::Leaf { class_counts: vec![0, 5] };
        let forest = RandomForestModel {
            trees: vec![leaf_a.clone(), leaf_a.clone(), leaf_b.clone()],
            class_count: 2,
            feature_count: 1,
        };
        assert_eq!(forest.predict(&array![[0.0]]).unwrap(), vec![0]);
        let proba = forest.predict_proba(&array![[0.0]]).unwrap();
        assert!((proba[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);

        let tie = RandomForestModel {
            trees: vec![leaf_a, leaf_b],
            class_count: 2,
            feature_count: 1,
        };
        // 1:1 tie resolves to the lower class index.
        assert_eq!(tie.predict(&array![[0.0]]).unwrap(), vec![0]);
    }

    #[test]
    fn vote_fractions_match_three_to_one() {
        let leaf_a = TreeNode::Leaf { class_counts: vec![1, 0] };
        let leaf_b = TreeNode::Leaf { class_counts: vec![0, 1] };
        let forest = RandomForestModel {
            trees: vec![leaf_a.clone(), leaf_a.clone(), leaf_a, leaf_b],
            class_count: 2,
            feature_count: 1,
        };
        let proba = forest.predict_proba(&array![[0.0]]).unwrap();
        assert_eq!(proba[[0, 0]], 0.75);
        assert_eq!(proba[[0, 1]], 0.25);
    }

    // Noisy 1-D toy problem: class = sign of x, with label noise in training.
    fn noisy_problem(seed: u64, rows: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = crate::rng::derive_rng(seed, &[77]);
        let mut features = Array2::zeros((rows, 4));
        let mut labels = Vec::with_capacity(rows);
        for r in 0..rows {
            let x: f64 = rng.random_range(-1.0..1.0);
            features[[r, 0]] = x;
            for c in 1..4 {
                features[[r, c]] = rng.random_range(-1.0..1.0);
            }
            let clean_label = usize::from(x > 0.0);
            let noisy = if rng.random_range(0.0..1.0) < 0.25 {
                1 - clean_label
            } else {
                clean_label
            };
            labels.push(noisy);
        }
        (features, labels)
    }

    fn accuracy(predictions: &[usize], truth: &[usize]) -> f64 {
        predictions
            .iter()
            .zip(truth)
            .filter(|(a, b)| a == b)
            .count() as f64
            / truth.len() as f64
    }

    #[test]
    fn forest_beats_single_tree_on_noisy_data() {
        let (train_x, train_y) = noisy_problem(10, 300);
        let (test_x, _) = noisy_problem(11, 300);
        let test_truth: Vec<usize> = test_x
            .column(0)
            .iter()
            .map(|&x| usize::from(x > 0.0))
            .collect();

        let tree = crate::classifiers::fit(
            &ClassifierSpec::DecisionTree(TreeConfig::default()),
            &train_x,
            &train_y,
            2,
        )
        .unwrap();
        let forest = crate::classifiers::fit(
            &ClassifierSpec::RandomForest(ForestConfig::default()),
            &train_x,
            &train_y,
            2,
        )
        .unwrap();
        let tree_accuracy = accuracy(&tree.predict(&test_x).unwrap(), &test_truth);
        let forest_accuracy = accuracy(&forest.predict(&test_x).unwrap(), &test_truth);
        assert!(
            forest_accuracy >= tree_accuracy,
            "forest {forest_accuracy} vs tree {tree_accuracy}"
        );
    }

    #[test]
    fn bootstrap_trees_differ() {
        let (x, y) = noisy_problem(12, 100);
        let forest = fit(
            &ForestConfig {
                n_trees: 3,
                ..ForestConfig::default()
            },
            &x,
            &y,
            2,
        )
        .unwrap();
        assert_eq!(forest.tree_count(), 3);
        assert!(forest.trees[0] != forest.trees[1] || forest.trees[1] != forest.trees[2]);
    }

    #[test]
    fn single_tree_forest_without_bootstrap_matches_bagged_features_only() {
        // Sanity: a degenerate forest still predicts deterministically.
        let (x, y) = noisy_problem(13, 60);
        let forest = fit(
            &ForestConfig {
                n_trees: 1,
                bootstrap: false,
                features_per_split: Some(4),
                ..ForestConfig::default()
            },
            &x,
            &y,
            2,
        )
        .unwrap();
        let spec_tree = crate::classifiers::fit(
            &ClassifierSpec::DecisionTree(TreeConfig::default()),
            &x,
            &y,
            2,
        )
        .unwrap();
        let tree = spec_tree.predict(&x).unwrap();
        assert_eq!(forest.predict(&x).unwrap(), tree);
    }
}
