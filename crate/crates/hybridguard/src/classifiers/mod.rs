//! Uniform supervised-classifier contract with five built-in learners:
//! logistic regression, Gaussian naive Bayes, a CART decision tree, a random
//! forest, and a single-hidden-layer MLP. Further kinds (SVM, boosting
//! ensembles, ...) plug in behind the same contract via [`PluginRegistry`]
//! but ship without built-ins.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod forest;
mod gaussian_nb;
mod logistic;
mod mlp;
mod tree;

pub use forest::{ForestConfig, RandomForestModel};
pub use gaussian_nb::{GaussianNbConfig, GaussianNbModel};
pub use logistic::{LogisticRegressionConfig, LogisticRegressionModel};
pub use mlp::{MlpClassifierConfig, MlpClassifierModel};
pub use tree::{DecisionTreeModel, TreeConfig, TreeNode};

/// A fitted classifier. Implementations are immutable after fit and safe to
/// share across threads for prediction.
pub trait Classifier: Send + Sync {
    /// Kind tag used in serialized envelopes ("decision_tree", ...).
    fn kind(&self) -> &'static str;

    fn class_count(&self) -> usize;

    fn feature_count(&self) -> usize;

    /// One label in `0..class_count` per row; deterministic.
    fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>>;

    /// Per-row probability vectors: non-negative, summing to 1, with
    /// `argmax(predict_proba) == predict` everywhere. Trees and forests
    /// report leaf/vote frequencies.
    fn predict_proba(&self, rows: &Array2<f64>) -> Result<Array2<f64>>;

    /// Serializes the model (envelope plus payload) to a writer.
    fn write_model(&self, writer: &mut dyn Write) -> Result<()>;
}

/// A boxed fitted classifier.
pub type TrainedClassifier = Box<dyn Classifier>;

/// Specification of a classifier to fit: kind, hyperparameters, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    LogisticRegression(LogisticRegressionConfig),
    GaussianNb(GaussianNbConfig),
    DecisionTree(TreeConfig),
    RandomForest(ForestConfig),
    Mlp(MlpClassifierConfig),
    /// A classifier provided by a plugin registered under `name`.
    External { name: String },
}

/// Trainer for externally provided classifier kinds.
pub trait ClassifierPlugin: Send + Sync {
    fn fit(
        &self,
        features: &Array2<f64>,
        labels: &[usize],
        class_count: usize,
    ) -> Result<TrainedClassifier>;
}

/// Named external trainers, looked up by `ClassifierSpec::External`.
#[derive(Default, Clone)]
pub struct PluginRegistry {
    plugins: BTreeMap<String, Arc<dyn ClassifierPlugin>>,
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, plugin: Arc<dyn ClassifierPlugin>) {
        self.plugins.insert(name.to_string(), plugin);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn ClassifierPlugin>> {
        self.plugins.get(name)
    }
}

pub(crate) fn validate_training_inputs(
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::InvalidArgument("cannot fit on an empty dataset".into()));
    }
    if labels.len() != features.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            features.nrows()
        )));
    }
    if class_count == 0 {
        return Err(Error::InvalidArgument("class_count must be positive".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {class_count} classes"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features contain NaN or infinity".into()));
    }
    Ok(())
}

pub(crate) fn validate_prediction_width(expected: usize, rows: &Array2<f64>) -> Result<()> {
    if rows.ncols() != expected {
        return Err(Error::ShapeMismatch(format!(
            "prediction rows have width {}, model expects {}",
            rows.ncols(),
            expected
        )));
    }
    Ok(())
}

/// Fits a built-in classifier.
pub fn fit(
    spec: &ClassifierSpec,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<TrainedClassifier> {
    fit_with_plugins(spec, features, labels, class_count, None)
}

/// Fits a classifier, consulting `plugins` for external kinds.
pub fn fit_with_plugins(
    spec: &ClassifierSpec,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    plugins: Option<&PluginRegistry>,
) -> Result<TrainedClassifier> {
    validate_training_inputs(features, labels, class_count)?;
    match spec {
        ClassifierSpec::LogisticRegression(config) => {
            Ok(Box::new(logistic::fit(config, features, labels, class_count)?))
        }
        ClassifierSpec::GaussianNb(config) => {
            Ok(Box::new(gaussian_nb::fit(config, features, labels, class_count)?))
        }
        ClassifierSpec::DecisionTree(config) => {
            Ok(Box::new(tree::fit(config, features, labels, class_count)?))
        }
        ClassifierSpec::RandomForest(config) => {
            Ok(Box::new(forest::fit(config, features, labels, class_count)?))
        }
        ClassifierSpec::Mlp(config) => {
            Ok(Box::new(mlp::fit(config, features, labels, class_count)?))
        }
        ClassifierSpec::External { name } => match plugins.and_then(|p| p.get(name)) {
            Some(plugin) => plugin.fit(features, labels, class_count),
            None => Err(Error::MissingPlugin(name.clone())),
        },
    }
}

/// Envelope line written in front of every serialized model.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ModelEnvelope {
    pub format_version: u32,
    pub kind: String,
    pub feature_count: usize,
    pub class_count: usize,
    /// Inline JSON payload for kinds that need no binary section.
    pub payload: Option<serde_json::Value>,
}

pub(crate) fn write_envelope(writer: &mut dyn Write, envelope: &ModelEnvelope) -> Result<()> {
    serde_json::to_writer(&mut *writer, envelope)?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Reads any model serialized by [`Classifier::write_model`].
pub fn read_model<R: BufRead>(reader: &mut R) -> Result<TrainedClassifier> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let envelope: ModelEnvelope = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::ModelFormat(format!("bad model envelope: {e}")))?;
    if envelope.format_version != 1 {
        return Err(Error::ModelFormat(format!(
            "unsupported model format version {}",
            envelope.format_version
        )));
    }
    match envelope.kind.as_str() {
        "logistic_regression" => Ok(Box::new(logistic::read(reader, &envelope)?)),
        "gaussian_nb" => Ok(Box::new(gaussian_nb::read(&envelope)?)),
        "decision_tree" => Ok(Box::new(tree::read(&envelope)?)),
        "random_forest" => Ok(Box::new(forest::read(&envelope)?)),
        "mlp" => Ok(Box::new(mlp::read(reader, &envelope)?)),
        other => Err(Error::ModelFormat(format!("unknown model kind '{other}'"))),
    }
}

/// Argmax with ties resolved to the lowest index.
pub(crate) fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best_index = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best {
            best = v;
            best_index = i;
        }
    }
    best_index
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_blobs(seed: u64, per_class: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = crate::rng::derive_rng(seed, &[123]);
        let centers = [(-3.0, -3.0), (3.0, 3.0), (3.0, -3.0)];
        let rows = per_class * centers.len();
        let mut features = Array2::zeros((rows, 2));
        let mut labels = Vec::with_capacity(rows);
        for (class, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..per_class {
                let r = class * per_class + i;
                features[[r, 0]] = cx + rand::Rng::random_range(&mut rng, -1.0..1.0);
                features[[r, 1]] = cy + rand::Rng::random_range(&mut rng, -1.0..1.0);
                labels.push(class);
            }
        }
        (features, labels)
    }

    fn all_specs() -> Vec<ClassifierSpec> {
        vec![
            ClassifierSpec::LogisticRegression(LogisticRegressionConfig::default()),
            ClassifierSpec::GaussianNb(GaussianNbConfig::default()),
            ClassifierSpec::DecisionTree(TreeConfig::default()),
            ClassifierSpec::RandomForest(ForestConfig {
                n_trees: 20,
                ..ForestConfig::default()
            }),
            ClassifierSpec::Mlp(MlpClassifierConfig {
                iterations: 150,
                ..MlpClassifierConfig::default()
            }),
        ]
    }

    #[test]
    fn every_kind_fits_and_separates_blobs() {
        let (features, labels) = toy_blobs(1, 40);
        for spec in all_specs() {
            let model = fit(&spec, &features, &labels, 3).unwrap();
            let predictions = model.predict(&features).unwrap();
            let correct = predictions
                .iter()
                .zip(&labels)
                .filter(|(a, b)| a == b)
                .count();
            assert!(
                correct as f64 / labels.len() as f64 >= 0.95,
                "kind {} got {}/{}",
                model.kind(),
                correct,
                labels.len()
            );
        }
    }

    #[test]
    fn argmax_of_proba_equals_predict_for_every_kind() {
        let (features, labels) = toy_blobs(2, 25);
        let (probe, _) = toy_blobs(3, 10);
        for spec in all_specs() {
            let model = fit(&spec, &features, &labels, 3).unwrap();
            let predictions = model.predict(&probe).unwrap();
            let probabilities = model.predict_proba(&probe).unwrap();
            for (r, &p) in predictions.iter().enumerate() {
                let row: Vec<f64> = probabilities.row(r).to_vec();
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "kind {} row sum {}", model.kind(), sum);
                assert!(row.iter().all(|&v| v >= 0.0));
                assert_eq!(argmax_first(row), p, "kind {}", model.kind());
            }
        }
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let (features, labels) = toy_blobs(4, 20);
        let (probe, _) = toy_blobs(5, 15);
        for spec in all_specs() {
            let a = fit(&spec, &features, &labels, 3).unwrap();
            let b = fit(&spec, &features, &labels, 3).unwrap();
            assert_eq!(
                a.predict(&probe).unwrap(),
                b.predict(&probe).unwrap(),
                "kind {}",
                a.kind()
            );
            assert_eq!(
                a.predict_proba(&probe).unwrap(),
                b.predict_proba(&probe).unwrap()
            );
        }
    }

    #[test]
    fn models_round_trip_through_serialization() {
        let (features, labels) = toy_blobs(6, 15);
        let (probe, _) = toy_blobs(7, 10);
        for spec in all_specs() {
            let model = fit(&spec, &features, &labels, 3).unwrap();
            let mut buffer = Vec::new();
            model.write_model(&mut buffer).unwrap();
            let mut cursor = std::io::Cursor::new(buffer);
            let restored = read_model(&mut cursor).unwrap();
            assert_eq!(restored.kind(), model.kind());
            assert_eq!(restored.class_count(), 3);
            assert_eq!(
                restored.predict(&probe).unwrap(),
                model.predict(&probe).unwrap()
            );
            assert_eq!(
                restored.predict_proba(&probe).unwrap(),
                model.predict_proba(&probe).unwrap()
            );
        }
    }

    #[test]
    fn external_kind_without_plugin_errors() {
        let spec = ClassifierSpec::External { name: "svm".into() };
        let result = fit(&spec, &array![[0.0], [1.0]], &[0, 1], 2);
        assert!(matches!(result, Err(Error::MissingPlugin(name)) if name == "svm"));
    }

    #[test]
    fn external_kind_with_plugin_fits() {
        struct AlwaysZeroPlugin;
        struct AlwaysZero {
            classes: usize,
            width: usize,
        }
        impl Classifier for AlwaysZero {
            fn kind(&self) -> &'static str {
                "always_zero"
            }
            fn class_count(&self) -> usize {
                self.classes
            }
            fn feature_count(&self) -> usize {
                self.width
            }
            fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>> {
                Ok(vec![0; rows.nrows()])
            }
            fn predict_proba(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
                let mut p = Array2::zeros((rows.nrows(), self.classes));
                p.column_mut(0).fill(1.0);
                Ok(p)
            }
            fn write_model(&self, _writer: &mut dyn Write) -> Result<()> {
                Err(Error::ModelFormat("not serializable".into()))
            }
        }
        impl ClassifierPlugin for AlwaysZeroPlugin {
            fn fit(
                &self,
                features: &Array2<f64>,
                _labels: &[usize],
                class_count: usize,
            ) -> Result<TrainedClassifier> {
                Ok(Box::new(AlwaysZero {
                    classes: class_count,
                    width: features.ncols(),
                }))
            }
        }
        let mut registry = PluginRegistry::new();
        registry.register("svm", Arc::new(AlwaysZeroPlugin));
        let spec = ClassifierSpec::External { name: "svm".into() };
        let model =
            fit_with_plugins(&spec, &array![[0.0], [1.0]], &[0, 1], 2, Some(&registry)).unwrap();
        assert_eq!(model.predict(&array![[5.0]]).unwrap(), vec![0]);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ClassifierSpec::RandomForest(ForestConfig::default());
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("random_forest"));
        let back: ClassifierSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
