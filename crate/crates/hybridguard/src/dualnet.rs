//! Two-phase detector.
//!
//! Phase 1 fits a configurable classifier on all classes over the top-k
//! MI-ranked features; a prediction naming a major attack class is final.
//! Every other row is re-classified by phase 2: a random forest fitted on the
//! normal-plus-minority subset (group 2), with its own MI feature ranking over
//! group-2 labels and random downsampling of over-represented classes.
//! A combination search pairs each phase-1 kind with the phase-2 forest and
//! keeps the best scorer.

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassifierSpec, ForestConfig, TrainedClassifier};
use crate::featsel::{rank_features, select_top_k, BinningSpec};
use crate::metrics::EvaluationReport;
use crate::rng::{derive_rng, tags};
use crate::tabular::Dataset;
use crate::{Error, Result};

/// Disjoint cover of the class ids: one normal class, major attacks, minor
/// attacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub normal_class: usize,
    pub major_classes: BTreeSet<usize>,
    pub minor_classes: BTreeSet<usize>,
}

impl ClassPartition {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        seen.insert(self.normal_class);
        for &c in self.major_classes.iter().chain(&self.minor_classes) {
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!(
                    "class {c} appears in more than one partition group"
                )));
            }
        }
        if seen.len() != class_count || seen.iter().any(|&c| c >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "partition must cover exactly the {class_count} classes, got {seen:?}"
            )));
        }
        Ok(())
    }

    /// Group-2 class ids in ascending order: normal plus minors.
    pub fn group2_classes(&self) -> Vec<usize> {
        let mut classes: Vec<usize> = self.minor_classes.iter().copied().collect();
        classes.push(self.normal_class);
        classes.sort_unstable();
        classes
    }
}

/// How to derive a [`ClassPartition`] from a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionPolicy {
    /// Explicit class-name lists; they must cover every class.
    Explicit {
        normal: String,
        major: Vec<String>,
        minor: Vec<String>,
    },
    /// Non-normal classes with a training count below
    /// `theta * largest_attack_class_count` are minor; the rest are major.
    FrequencyThreshold { normal: String, theta: f64 },
}

/// Builds the partition from the policy.
pub fn partition_classes(dataset: &Dataset, policy: &PartitionPolicy) -> Result<ClassPartition> {
    if dataset.class_count() < 2 {
        return Err(Error::InvalidArgument(
            "partitioning needs at least two classes".into(),
        ));
    }
    let class_id = |name: &str| -> Result<usize> {
        dataset
            .class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    };
    let partition = match policy {
        PartitionPolicy::Explicit { normal, major, minor } => {
            let normal_class = class_id(normal)?;
            let major_classes = major.iter().map(|n| class_id(n)).collect::<Result<_>>()?;
            let minor_classes = minor.iter().map(|n| class_id(n)).collect::<Result<_>>()?;
            ClassPartition {
                normal_class,
                major_classes,
                minor_classes,
            }
        }
        PartitionPolicy::FrequencyThreshold { normal, theta } => {
            if !(*theta > 0.0) {
                return Err(Error::InvalidArgument("theta must be positive".into()));
            }
            let normal_class = class_id(normal)?;
            let counts = dataset.class_counts();
            let largest_attack = counts
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != normal_class)
                .map(|(_, &n)| n)
                .max()
                .unwrap_or(0);
            let cutoff = theta * largest_attack as f64;
            let mut major_classes = BTreeSet::new();
            let mut minor_classes = BTreeSet::new();
            for (c, &n) in counts.iter().enumerate() {
                if c == normal_class {
                    continue;
                }
                if (n as f64) < cutoff {
                    minor_classes.insert(c);
                } else {
                    major_classes.insert(c);
                }
            }
            ClassPartition {
                normal_class,
                major_classes,
                minor_classes,
            }
        }
    };
    partition.validate(dataset.class_count())?;
    Ok(partition)
}

/// Randomly downsamples every class whose count exceeds the largest
/// minor-class count down to that count (without replacement, seeded).
/// Minority rows are never removed; surviving rows keep their original order.
pub fn downsample_majority(dataset: &Dataset, partition: &ClassPartition, seed: u64) -> Dataset {
    let counts = dataset.class_counts();
    let cap = partition
        .minor_classes
        .iter()
        .map(|&c| counts[c])
        .max()
        .unwrap_or(0);
    if cap == 0 {
        return dataset.clone();
    }
    let mut rng = derive_rng(seed, &[tags::DOWNSAMPLE]);
    let mut keep: Vec<usize> = Vec::with_capacity(dataset.rows());
    for class in 0..dataset.class_count() {
        let mut rows: Vec<usize> = (0..dataset.rows())
            .filter(|&i| dataset.labels[i] == class)
            .collect();
        if rows.len() > cap && !partition.minor_classes.contains(&class) {
            for i in (1..rows.len()).rev() {
                let j = rng.random_range(0..=i);
                rows.swap(i, j);
            }
            rows.truncate(cap);
        }
        keep.extend(rows);
    }
    keep.sort_unstable();
    dataset.select_rows(&keep)
}

/// Detector configuration beyond the classifier specs themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualNetConfig {
    /// Features kept per phase (independently ranked).
    pub k_features: usize,
    pub binning: BinningSpec,
    /// Trust phase-1 predictions of minor classes instead of routing them to
    /// phase 2.
    pub trust_phase1_minor: bool,
    /// Rank phase-2 features after downsampling instead of before.
    pub mi_after_downsample: bool,
    /// Seed for group-2 downsampling.
    pub seed: u64,
}

impl Default for DualNetConfig {
    fn default() -> Self {
        DualNetConfig {
            k_features: 30,
            binning: BinningSpec::default(),
            trust_phase1_minor: false,
            mi_after_downsample: false,
            seed: 0,
        }
    }
}

/// Phase-1 model: any classifier over the all-class top-k feature subset.
pub struct Phase1Model {
    pub classifier: TrainedClassifier,
    pub feature_indices: Vec<usize>,
}

/// Phase-2 model: a random forest over group-2 data with its own feature
/// subset; `class_ids` maps the forest's internal labels back to dataset
/// class ids.
pub struct Phase2Model {
    pub forest: TrainedClassifier,
    pub feature_indices: Vec<usize>,
    pub class_ids: Vec<usize>,
}

/// A fitted two-phase detector.
pub struct DualNetModel {
    pub partition: ClassPartition,
    pub phase1: Phase1Model,
    /// Absent when the dataset had no minor classes; predictions then never
    /// route.
    pub phase2: Option<Phase2Model>,
    pub trust_phase1_minor: bool,
    pub class_names: Vec<String>,
}

fn take_columns(rows: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    rows.select(Axis(1), indices)
}

/// Trains both phases.
///
/// Phase 1: MI-rank all features on the full training data, keep the top k,
/// fit the phase-1 classifier on all classes. Phase 2: restrict to group-2
/// rows, re-rank features against group-2 labels, downsample, fit the forest.
pub fn train_dualnet(
    train: &Dataset,
    partition: &ClassPartition,
    phase1_spec: &ClassifierSpec,
    forest_config: &ForestConfig,
    config: &DualNetConfig,
) -> Result<DualNetModel> {
    partition.validate(train.class_count())?;

    let ranking = rank_features(train, &config.binning)?;
    let phase1_features = select_top_k(&ranking, config.k_features)?;
    let phase1_classifier = classifiers::fit(
        phase1_spec,
        &take_columns(&train.features, &phase1_features),
        &train.labels,
        train.class_count(),
    )?;
    let phase1 = Phase1Model {
        classifier: phase1_classifier,
        feature_indices: phase1_features,
    };

    let group2_ids = partition.group2_classes();
    let has_minors = !partition.minor_classes.is_empty();
    let phase2 = if has_minors {
        let group2_rows: Vec<usize> = (0..train.rows())
            .filter(|&i| group2_ids.contains(&train.labels[i]))
            .collect();
        if group2_rows.is_empty() {
            return Err(Error::InvalidArgument("no group-2 rows in the training data".into()));
        }
        let group2 = train.select_rows(&group2_rows);
        let (ranking_data, fit_data);
        if config.mi_after_downsample {
            fit_data = downsample_majority(&group2, partition, config.seed);
            ranking_data = fit_data.clone();
        } else {
            ranking_data = group2.clone();
            fit_data = downsample_majority(&group2, partition, config.seed);
        }
        // Rank against group-2 labels remapped to a contiguous range so the
        // MI estimator sees only the phase's own label set.
        let remap = |labels: &[usize]| -> Vec<usize> {
            labels
                .iter()
                .map(|l| group2_ids.iter().position(|&g| g == *l).unwrap())
                .collect()
        };
        let ranking_dataset = Dataset::new(
            ranking_data.features.clone(),
            remap(&ranking_data.labels),
            ranking_data.feature_names.clone(),
            group2_ids.iter().map(|&c| train.class_names[c].clone()).collect(),
        )?;
        let phase2_ranking = rank_features(&ranking_dataset, &config.binning)?;
        let phase2_features = select_top_k(&phase2_ranking, config.k_features)?;
        let forest = classifiers::fit(
            &ClassifierSpec::RandomForest(forest_config.clone()),
            &take_columns(&fit_data.features, &phase2_features),
            &remap(&fit_data.labels),
            group2_ids.len(),
        )?;
        Some(Phase2Model {
            forest,
            feature_indices: phase2_features,
            class_ids: group2_ids,
        })
    } else {
        None
    };

    Ok(DualNetModel {
        partition: partition.clone(),
        phase1,
        phase2,
        trust_phase1_minor: config.trust_phase1_minor,
        class_names: train.class_names.clone(),
    })
}

impl DualNetModel {
    /// Whether phase 2 is absent because no minor classes were configured.
    pub fn is_degenerate(&self) -> bool {
        self.phase2.is_none()
    }

    /// Classifies rows in the training feature universe: phase-1 major
    /// predictions are final, everything else goes to phase 2.
    pub fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>> {
        let phase1_input = take_columns(rows, &self.phase1.feature_indices);
        let phase1_labels = self.phase1.classifier.predict(&phase1_input)?;

        let Some(phase2) = &self.phase2 else {
            return Ok(phase1_labels);
        };

        let mut routed_rows: Vec<usize> = Vec::new();
        for (i, &label) in phase1_labels.iter().enumerate() {
            let is_major = self.partition.major_classes.contains(&label);
            let trusted_minor =
                self.trust_phase1_minor && self.partition.minor_classes.contains(&label);
            if !is_major && !trusted_minor {
                routed_rows.push(i);
            }
        }
        let mut output = phase1_labels;
        if routed_rows.is_empty() {
            return Ok(output);
        }
        let routed = rows.select(Axis(0), &routed_rows);
        let phase2_input = take_columns(&routed, &phase2.feature_indices);
        let phase2_labels = phase2.forest.predict(&phase2_input)?;
        for (&row, internal) in routed_rows.iter().zip(phase2_labels) {
            output[row] = phase2.class_ids[internal];
        }
        Ok(output)
    }
}

#[derive(Serialize, Deserialize)]
struct DualNetEnvelope {
    format_version: u32,
    partition: ClassPartition,
    phase1_features: Vec<usize>,
    phase1_file: String,
    phase2: Option<DualNetPhase2Envelope>,
    trust_phase1_minor: bool,
    class_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DualNetPhase2Envelope {
    features: Vec<usize>,
    class_ids: Vec<usize>,
    file: String,
}

/// Saves a detector as a directory: a JSON envelope referencing the two
/// classifier model files.
pub fn write_dualnet(model: &DualNetModel, directory: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(directory)?;
    let mut phase1_file = std::io::BufWriter::new(std::fs::File::create(
        directory.join("phase1.model"),
    )?);
    model.phase1.classifier.write_model(&mut phase1_file)?;
    let phase2 = match &model.phase2 {
        Some(phase2) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(
                directory.join("phase2.model"),
            )?);
            phase2.forest.write_model(&mut file)?;
            Some(DualNetPhase2Envelope {
                features: phase2.feature_indices.clone(),
                class_ids: phase2.class_ids.clone(),
                file: "phase2.model".into(),
            })
        }
        None => None,
    };
    let envelope = DualNetEnvelope {
        format_version: 1,
        partition: model.partition.clone(),
        phase1_features: model.phase1.feature_indices.clone(),
        phase1_file: "phase1.model".into(),
        phase2,
        trust_phase1_minor: model.trust_phase1_minor,
        class_names: model.class_names.clone(),
    };
    let json = serde_json::to_string_pretty(&envelope)?;
    std::fs::write(directory.join("dualnet.json"), json)?;
    Ok(())
}

/// Loads a detector saved by [`write_dualnet`].
pub fn read_dualnet(directory: &std::path::Path) -> Result<DualNetModel> {
    let json = std::fs::read_to_string(directory.join("dualnet.json"))?;
    let envelope: DualNetEnvelope = serde_json::from_str(&json)
        .map_err(|e| Error::ModelFormat(format!("bad dualnet envelope: {e}")))?;
    if envelope.format_version != 1 {
        return Err(Error::ModelFormat(format!(
            "unsupported dualnet format version {}",
            envelope.format_version
        )));
    }
    let mut phase1_file =
        std::io::BufReader::new(std::fs::File::open(directory.join(&envelope.phase1_file))?);
    let phase1 = Phase1Model {
        classifier: classifiers::read_model(&mut phase1_file)?,
        feature_indices: envelope.phase1_features,
    };
    let phase2 = match envelope.phase2 {
        Some(envelope2) => {
            let mut file =
                std::io::BufReader::new(std::fs::File::open(directory.join(&envelope2.file))?);
            Some(Phase2Model {
                forest: classifiers::read_model(&mut file)?,
                feature_indices: envelope2.features,
                class_ids: envelope2.class_ids,
            })
        }
        None => None,
    };
    Ok(DualNetModel {
        partition: envelope.partition,
        phase1,
        phase2,
        trust_phase1_minor: envelope.trust_phase1_minor,
        class_names: envelope.class_names,
    })
}

/// A named phase-1 spec to pair with the phase-2 forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationSpec {
    pub name: String,
    pub phase1: ClassifierSpec,
}

/// Evaluation outcome of one combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationResult {
    pub name: String,
    /// Multi-class accuracy on the test set.
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Binary false-alarm rate, attack positive.
    pub far: f64,
    pub report: Option<EvaluationReport>,
}

impl CombinationResult {
    /// Builds a result from already-known summary metrics (no report), as
    /// when ranking published numbers.
    pub fn from_summary(name: &str, accuracy: f64, macro_f1: f64, far: f64) -> CombinationResult {
        CombinationResult {
            name: name.to_string(),
            accuracy,
            macro_f1,
            far,
            report: None,
        }
    }
}

/// Trains and scores one detector per combination. Each combination trains on
/// `train` and is evaluated on the untouched `test` set.
pub fn evaluate_combinations(
    train: &Dataset,
    test: &Dataset,
    partition: &ClassPartition,
    combinations: &[CombinationSpec],
    forest_config: &ForestConfig,
    config: &DualNetConfig,
) -> Result<Vec<CombinationResult>> {
    if combinations.is_empty() {
        return Err(Error::InvalidArgument("no combinations configured".into()));
    }
    let mut results = Vec::with_capacity(combinations.len());
    for combination in combinations {
        let model = train_dualnet(train, partition, &combination.phase1, forest_config, config)?;
        let predictions = model.predict(&test.features)?;
        let report = EvaluationReport::from_predictions(
            &test.labels,
            &predictions,
            &test.class_names,
            partition.normal_class,
        )?;
        results.push(CombinationResult {
            name: combination.name.clone(),
            accuracy: report.multiclass_accuracy,
            macro_f1: report.macro_f1,
            far: report.rates.far,
            report: Some(report),
        });
    }
    Ok(results)
}

/// Natural ordering for combination names: numeric suffixes compare as
/// numbers, so M2 sorts before M10.
fn name_key(name: &str) -> (String, Option<u64>, String) {
    let digits_at = name.find(|c: char| c.is_ascii_digit());
    match digits_at {
        Some(at) => {
            let (prefix, rest) = name.split_at(at);
            let digit_end = rest
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(rest.len());
            let (digits, tail) = rest.split_at(digit_end);
            (prefix.to_string(), digits.parse().ok(), tail.to_string())
        }
        None => (name.to_string(), None, String::new()),
    }
}

/// Picks the best combination: highest accuracy, ties by macro-F1, then
/// lowest FAR, then name order.
pub fn select_best(results: &[CombinationResult]) -> Option<&CombinationResult> {
    results.iter().min_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then(b.macro_f1.total_cmp(&a.macro_f1))
            .then(a.far.total_cmp(&b.far))
            .then(name_key(&a.name).cmp(&name_key(&b.name)))
    })
}

/// Writes the combination sweep as CSV with columns
/// `model,accuracy,f1,precision,recall,far`, values in percent rounded to two
/// decimals. Accuracy is multi-class; F1/precision/recall are the
/// support-weighted averages; FAR is binary.
pub fn write_sweep_csv<W: Write>(results: &[CombinationResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "accuracy", "f1", "precision", "recall", "far"])?;
    let percent = |v: f64| format!("{:.2}", v * 100.0);
    for result in results {
        let (f1, precision, recall) = match &result.report {
            Some(report) => (
                report.weighted.f1,
                report.weighted.precision,
                report.weighted.recall,
            ),
            None => (result.macro_f1, f64::NAN, f64::NAN),
        };
        w.write_record([
            result.name.clone(),
            percent(result.accuracy),
            percent(f1),
            percent(precision),
            percent(recall),
            percent(result.far),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{Classifier, GaussianNbConfig};

    fn dataset_with_counts(counts: &[usize]) -> Dataset {
        let rows: usize = counts.iter().sum();
        let mut labels = Vec::with_capacity(rows);
        for (class, &count) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat_n(class, count));
        }
        let features = Array2::from_shape_fn((rows, 2), |(i, j)| (i * 3 + j) as f64);
        Dataset::new(
            features,
            labels,
            vec!["f0".into(), "f1".into()],
            (0..counts.len()).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    // Three well-separated clusters per class around per-class centers; class
    // 0 is normal, 1 is major, 2..n are minor.
    fn clustered_dataset(counts: &[usize], seed: u64) -> Dataset {
        let rows: usize = counts.iter().sum();
        let mut rng = derive_rng(seed, &[200]);
        let mut features = Array2::zeros((rows, 3));
        let mut labels = Vec::with_capacity(rows);
        let mut r = 0;
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                features[[r, 0]] = class as f64 * 6.0 + rng.random_range(-1.0..1.0);
                features[[r, 1]] = -(class as f64) * 6.0 + rng.random_range(-1.0..1.0);
                features[[r, 2]] = rng.random_range(-1.0..1.0);
                labels.push(class);
                r += 1;
            }
        }
        Dataset::new(
            features,
            labels,
            vec!["f0".into(), "f1".into(), "noise".into()],
            (0..counts.len()).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    fn explicit_partition(normal: usize, major: &[usize], minor: &[usize]) -> ClassPartition {
        ClassPartition {
            normal_class: normal,
            major_classes: major.iter().copied().collect(),
            minor_classes: minor.iter().copied().collect(),
        }
    }

    #[test]
    fn partition_explicit_by_name() {
        let ds = dataset_with_counts(&[10, 10, 10]);
        let policy = PartitionPolicy::Explicit {
            normal: "c0".into(),
            major: vec!["c1".into()],
            minor: vec!["c2".into()],
        };
        let partition = partition_classes(&ds, &policy).unwrap();
        assert_eq!(partition.normal_class, 0);
        assert!(partition.major_classes.contains(&1));
        assert!(partition.minor_classes.contains(&2));
    }

    #[test]
    fn partition_explicit_must_cover_all_classes() {
        let ds = dataset_with_counts(&[10, 10, 10]);
        let policy = PartitionPolicy::Explicit {
            normal: "c0".into(),
            major: vec!["c1".into()],
            minor: vec![],
        };
        assert!(partition_classes(&ds, &policy).is_err());
    }

    #[test]
    fn partition_threshold_rule() {
        let ds = dataset_with_counts(&[1000, 900, 50]);
        let policy = PartitionPolicy::FrequencyThreshold {
            normal: "c0".into(),
            theta: 0.2,
        };
        let partition = partition_classes(&ds, &policy).unwrap();
        // 50 < 0.2 * 900 so c2 is minor; c1 is major.
        assert_eq!(partition.major_classes, [1].into_iter().collect());
        assert_eq!(partition.minor_classes, [2].into_iter().collect());
    }

    #[test]
    fn downsample_caps_at_largest_minor_count() {
        let ds = dataset_with_counts(&[10_000 / 10, 500 / 10, 300 / 10]); // 1000/50/30 scaled by 10
        let partition = explicit_partition(0, &[], &[1, 2]);
        let out = downsample_majority(&ds, &partition, 9);
        assert_eq!(out.class_counts(), vec![50, 50, 30]);
    }

    #[test]
    fn downsample_balanced_input_unchanged() {
        let ds = dataset_with_counts(&[40, 40, 40]);
        let partition = explicit_partition(0, &[], &[1, 2]);
        let out = downsample_majority(&ds, &partition, 9);
        assert_eq!(out.class_counts(), vec![40, 40, 40]);
        assert_eq!(out.features, ds.features);
    }

    #[test]
    fn downsample_never_removes_minority_rows() {
        let ds = dataset_with_counts(&[50, 500]);
        let partition = explicit_partition(0, &[], &[1]);
        let out = downsample_majority(&ds, &partition, 9);
        // Normal (50) is not above the cap (500): unchanged.
        assert_eq!(out.class_counts(), vec![50, 500]);
    }

    #[test]
    fn downsample_is_deterministic() {
        let ds = dataset_with_counts(&[300, 20, 10]);
        let partition = explicit_partition(0, &[], &[1, 2]);
        let a = downsample_majority(&ds, &partition, 4);
        let b = downsample_majority(&ds, &partition, 4);
        assert_eq!(a.features, b.features);
        let c = downsample_majority(&ds, &partition, 5);
        assert_ne!(a.features, c.features);
    }

    fn forest_config() -> ForestConfig {
        ForestConfig {
            n_trees: 30,
            seed: 3,
            ..ForestConfig::default()
        }
    }

    fn gnb_spec() -> ClassifierSpec {
        ClassifierSpec::GaussianNb(GaussianNbConfig::default())
    }

    #[test]
    fn train_records_both_feature_subsets() {
        let ds = clustered_dataset(&[200, 150, 40], 31);
        let partition = explicit_partition(0, &[1], &[2]);
        let config = DualNetConfig {
            k_features: 2,
            ..DualNetConfig::default()
        };
        let model =
            train_dualnet(&ds, &partition, &gnb_spec(), &forest_config(), &config).unwrap();
        assert_eq!(model.phase1.feature_indices.len(), 2);
        let phase2 = model.phase2.as_ref().unwrap();
        assert_eq!(phase2.feature_indices.len(), 2);
        // Phase-2 label space is normal plus minors.
        assert_eq!(phase2.class_ids, vec![0, 2]);
        assert_eq!(phase2.forest.class_count(), 2);
    }

    #[test]
    fn k_larger_than_d_keeps_all_features() {
        let ds = clustered_dataset(&[100, 80, 30], 32);
        let partition = explicit_partition(0, &[1], &[2]);
        let config = DualNetConfig {
            k_features: 30,
            ..DualNetConfig::default()
        };
        let model =
            train_dualnet(&ds, &partition, &gnb_spec(), &forest_config(), &config).unwrap();
        assert_eq!(model.phase1.feature_indices.len(), 3);
    }

    #[test]
    fn no_minor_classes_degenerates_without_routing() {
        let ds = clustered_dataset(&[100, 80], 33);
        let partition = explicit_partition(0, &[1], &[]);
        let model = train_dualnet(
            &ds,
            &partition,
            &gnb_spec(),
            &forest_config(),
            &DualNetConfig::default(),
        )
        .unwrap();
        assert!(model.is_degenerate());
        let predictions = model.predict(&ds.features).unwrap();
        assert_eq!(predictions.len(), ds.rows());
    }

    #[test]
    fn routing_covers_every_row_with_valid_labels() {
        let ds = clustered_dataset(&[150, 120, 40, 30], 34);
        let partition = explicit_partition(0, &[1], &[2, 3]);
        let model = train_dualnet(
            &ds,
            &partition,
            &gnb_spec(),
            &forest_config(),
            &DualNetConfig::default(),
        )
        .unwrap();
        let predictions = model.predict(&ds.features).unwrap();
        assert_eq!(predictions.len(), ds.rows());
        for &p in &predictions {
            assert!(p < ds.class_count());
        }
        // On this separable data the detector is nearly perfect.
        let correct = predictions.iter().zip(&ds.labels).filter(|(a, b)| a == b).count();
        assert!(correct as f64 / ds.rows() as f64 > 0.95);
    }

    #[test]
    fn phase1_major_predictions_are_terminal() {
        // Predictions for rows phase 1 labels major must not depend on
        // phase-2 training data.
        let ds = clustered_dataset(&[150, 120, 40], 35);
        let partition = explicit_partition(0, &[1], &[2]);
        let config = DualNetConfig::default();
        let model_a =
            train_dualnet(&ds, &partition, &gnb_spec(), &forest_config(), &config).unwrap();
        // Jitter only the minor-class rows to retrain phase 2 differently.
        let mut jittered = ds.clone();
        for i in 0..jittered.rows() {
            if jittered.labels[i] == 2 {
                jittered.features[[i, 2]] += 0.5;
            }
        }
        let model_b =
            train_dualnet(&jittered, &partition, &gnb_spec(), &forest_config(), &config).unwrap();

        let probe = clustered_dataset(&[30, 30, 10], 36);
        let phase1_input = take_columns(&probe.features, &model_a.phase1.feature_indices);
        let phase1_labels = model_a.phase1.classifier.predict(&phase1_input).unwrap();
        let a = model_a.predict(&probe.features).unwrap();
        let b = model_b.predict(&probe.features).unwrap();
        for (i, &p1) in phase1_labels.iter().enumerate() {
            if partition.major_classes.contains(&p1) {
                assert_eq!(a[i], b[i], "major-labeled row {i} changed with phase-2 data");
                assert_eq!(a[i], p1);
            }
        }
    }

    #[test]
    fn always_normal_phase1_reduces_to_phase2() {
        struct AlwaysNormal {
            width: usize,
            classes: usize,
        }
        impl Classifier for AlwaysNormal {
            fn kind(&self) -> &'static str {
                "always_normal"
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
                unimplemented!()
            }
        }

        let ds = clustered_dataset(&[150, 120, 40], 37);
        let partition = explicit_partition(0, &[1], &[2]);
        let trained = train_dualnet(
            &ds,
            &partition,
            &gnb_spec(),
            &forest_config(),
            &DualNetConfig::default(),
        )
        .unwrap();
        let phase2 = trained.phase2.unwrap();
        let phase2_features = phase2.feature_indices.clone();
        let phase2_ids = phase2.class_ids.clone();

        let stub = DualNetModel {
            partition: partition.clone(),
            phase1: Phase1Model {
                classifier: Box::new(AlwaysNormal {
                    width: trained.phase1.feature_indices.len(),
                    classes: ds.class_count(),
                }),
                feature_indices: trained.phase1.feature_indices.clone(),
            },
            phase2: Some(phase2),
            trust_phase1_minor: false,
            class_names: ds.class_names.clone(),
        };
        let probe = clustered_dataset(&[30, 30, 10], 38);
        let via_model = stub.predict(&probe.features).unwrap();
        let direct: Vec<usize> = stub
            .phase2
            .as_ref()
            .unwrap()
            .forest
            .predict(&take_columns(&probe.features, &phase2_features))
            .unwrap()
            .into_iter()
            .map(|internal| phase2_ids[internal])
            .collect();
        assert_eq!(via_model, direct);
    }

    #[test]
    fn trust_phase1_minor_flag_skips_routing() {
        let ds = clustered_dataset(&[150, 120, 40], 39);
        let partition = explicit_partition(0, &[1], &[2]);
        let config = DualNetConfig {
            trust_phase1_minor: true,
            ..DualNetConfig::default()
        };
        let model =
            train_dualnet(&ds, &partition, &gnb_spec(), &forest_config(), &config).unwrap();
        let phase1_input = take_columns(&ds.features, &model.phase1.feature_indices);
        let phase1_labels = model.phase1.classifier.predict(&phase1_input).unwrap();
        let predictions = model.predict(&ds.features).unwrap();
        for (i, &p1) in phase1_labels.iter().enumerate() {
            if partition.minor_classes.contains(&p1) {
                assert_eq!(predictions[i], p1);
            }
        }
    }

    #[test]
    fn combination_sweep_and_selection() {
        let ds = clustered_dataset(&[200, 150, 40], 40);
        let test = clustered_dataset(&[60, 40, 15], 41);
        let partition = explicit_partition(0, &[1], &[2]);
        let combinations = vec![
            CombinationSpec {
                name: "M2".into(),
                phase1: gnb_spec(),
            },
            CombinationSpec {
                name: "M3".into(),
                phase1: ClassifierSpec::DecisionTree(Default::default()),
            },
        ];
        let results = evaluate_combinations(
            &ds,
            &test,
            &partition,
            &combinations,
            &forest_config(),
            &DualNetConfig::default(),
        )
        .unwrap();
        assert_eq!(results.len(), 2);
        let best = select_best(&results).unwrap();
        assert!(results.iter().all(|r| r.accuracy <= best.accuracy));

        let mut csv = Vec::new();
        write_sweep_csv(&results, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("model,accuracy,f1,precision,recall,far\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn select_best_tie_rules() {
        let results = vec![
            CombinationResult::from_summary("M1", 0.9, 0.8, 0.1),
            CombinationResult::from_summary("M2", 0.9, 0.9, 0.1),
            CombinationResult::from_summary("M3", 0.9, 0.9, 0.05),
            CombinationResult::from_summary("M10", 0.9, 0.9, 0.05),
        ];
        // Same accuracy everywhere: macro-F1 rules out M1, FAR rules out M2,
        // name order picks M3 over M10.
        assert_eq!(select_best(&results).unwrap().name, "M3");

        let higher_accuracy = vec![
            CombinationResult::from_summary("M1", 0.99, 0.1, 0.5),
            CombinationResult::from_summary("M2", 0.9, 0.9, 0.0),
        ];
        assert_eq!(select_best(&higher_accuracy).unwrap().name, "M1");

        let f1_tiebreak = vec![
            CombinationResult::from_summary("A", 0.9, 0.8, 0.0),
            CombinationResult::from_summary("B", 0.9, 0.9, 0.0),
        ];
        assert_eq!(select_best(&f1_tiebreak).unwrap().name, "B");
    }

    #[test]
    fn dualnet_directory_round_trip() {
        let ds = clustered_dataset(&[150, 120, 40], 42);
        let partition = explicit_partition(0, &[1], &[2]);
        let model = train_dualnet(
            &ds,
            &partition,
            &gnb_spec(),
            &forest_config(),
            &DualNetConfig::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dualnet(&model, dir.path()).unwrap();
        let restored = read_dualnet(dir.path()).unwrap();
        let probe = clustered_dataset(&[20, 20, 10], 43);
        assert_eq!(
            restored.predict(&probe.features).unwrap(),
            model.predict(&probe.features).unwrap()
        );
        assert_eq!(restored.partition, model.partition);
        assert_eq!(
            restored.phase1.feature_indices,
            model.phase1.feature_indices
        );
    }

    #[test]
    fn name_ordering_is_natural() {
        assert!(name_key("M2") < name_key("M10"));
        assert!(name_key("M1") < name_key("M2"));
        assert!(name_key("alpha") < name_key("beta"));
    }
}
