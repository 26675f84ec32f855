//! Confusion matrices and the evaluation rates reported by the pipeline:
//! accuracy, precision, recall, F1, and false-alarm rate, at binary
//! (attack/normal) and multi-class granularity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Square matrix of prediction counts; entry `(i, j)` counts rows whose true
/// class is `i` and predicted class is `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    /// Builds the matrix from aligned label vectors.
    pub fn from_predictions(y_true: &[usize], y_pred: &[usize], class_count: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::ShapeMismatch(format!(
                "y_true has {} labels, y_pred has {}",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut counts = vec![vec![0u64; class_count]; class_count];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= class_count || p >= class_count {
                return Err(Error::InvalidArgument(format!(
                    "label out of range: true={t} pred={p} class_count={class_count}"
                )));
            }
            counts[t][p] += 1;
        }
        let class_names = (0..class_count).map(|i| format!("class_{i}")).collect();
        Ok(ConfusionMatrix { counts, class_names })
    }

    /// Builds a matrix from raw counts (row = true class, column = predicted).
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("confusion matrix must be square".into()));
        }
        let class_names = (0..c).map(|i| format!("class_{i}")).collect();
        Ok(ConfusionMatrix { counts, class_names })
    }

    pub fn with_class_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.class_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} class names for a {}-class matrix",
                names.len(),
                self.class_count()
            )));
        }
        self.class_names = names.to_vec();
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn count(&self, true_class: usize, predicted_class: usize) -> u64 {
        self.counts[true_class][predicted_class]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Total number of evaluated rows.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Number of rows whose true class is `class`.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Number of rows predicted as `class`.
    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Multi-class accuracy: trace over total. Returns 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: u64 = (0..self.class_count()).map(|i| self.counts[i][i]).sum();
        trace as f64 / total as f64
    }

    /// Writes the matrix as CSV with a class-name header row and column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.class_names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.counts.iter().enumerate() {
            let mut record = vec![self.class_names[i].clone()];
            record.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Binary attack/normal counts with attack as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }
}

/// Collapses all non-normal classes into a single "attack" class.
///
/// An attack row predicted as a *different* attack class still counts as a
/// true positive; only predictions of the normal class count as negative.
pub fn collapse_to_binary(matrix: &ConfusionMatrix, normal_class: usize) -> Result<BinaryCounts> {
    let c = matrix.class_count();
    if normal_class >= c {
        return Err(Error::InvalidArgument(format!(
            "normal_class {normal_class} out of range for {c} classes"
        )));
    }
    let mut counts = BinaryCounts {
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
    };
    for i in 0..c {
        for j in 0..c {
            let n = matrix.count(i, j);
            match (i == normal_class, j == normal_class) {
                (true, true) => counts.true_negatives += n,
                (true, false) => counts.false_positives += n,
                (false, true) => counts.false_negatives += n,
                (false, false) => counts.true_positives += n,
            }
        }
    }
    Ok(counts)
}

/// Binary rates. Zero-denominator rates are reported as 0 and the rate name is
/// listed in `degenerate` so reports stay machine-comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub far: f64,
    pub degenerate: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Computes accuracy, precision, recall, F1 and false-alarm rate from binary
/// counts.
pub fn compute_rates(counts: &BinaryCounts) -> Rates {
    let mut degenerate = Vec::new();
    let BinaryCounts {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
    } = *counts;
    let accuracy = ratio(tp + tn, tp + tn + fp + fn_, "accuracy", &mut degenerate);
    let precision = ratio(tp, tp + fp, "precision", &mut degenerate);
    let recall = ratio(tp, tp + fn_, "recall", &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let far = ratio(fp, fp + tn, "far", &mut degenerate);
    Rates {
        accuracy,
        precision,
        recall,
        f1,
        far,
        degenerate,
    }
}

/// One-vs-rest statistics for a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_index: usize,
    pub class_name: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class one-vs-rest precision/recall/F1. Zero denominators yield 0.
pub fn per_class_stats(matrix: &ConfusionMatrix) -> Vec<ClassStats> {
    (0..matrix.class_count())
        .map(|c| {
            let tp = matrix.count(c, c);
            let support = matrix.support(c);
            let predicted = matrix.predicted(c);
            let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassStats {
                class_index: c,
                class_name: matrix.class_names()[c].clone(),
                support,
                precision,
                recall,
                f1,
            }
        })
        .collect()
}

/// Unweighted mean of per-class one-vs-rest F1 scores.
pub fn macro_f1(matrix: &ConfusionMatrix) -> f64 {
    let stats = per_class_stats(matrix);
    if stats.is_empty() {
        return 0.0;
    }
    stats.iter().map(|s| s.f1).sum::<f64>() / stats.len() as f64
}

/// Support-weighted precision/recall/F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn weighted_metrics(matrix: &ConfusionMatrix) -> WeightedMetrics {
    let total = matrix.total();
    let stats = per_class_stats(matrix);
    if total == 0 {
        return WeightedMetrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for s in &stats {
        let w = s.support as f64 / total as f64;
        precision += w * s.precision;
        recall += w * s.recall;
        f1 += w * s.f1;
    }
    WeightedMetrics { precision, recall, f1 }
}

/// Full evaluation of a prediction run: confusion matrix, collapsed binary
/// counts and rates, multi-class accuracy, and macro/weighted summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub class_names: Vec<String>,
    pub normal_class: usize,
    pub confusion: ConfusionMatrix,
    pub binary: BinaryCounts,
    /// Binary accuracy/precision/recall/F1/FAR with attack positive.
    pub rates: Rates,
    /// Trace-over-total accuracy on the full multi-class matrix.
    pub multiclass_accuracy: f64,
    pub macro_f1: f64,
    pub weighted: WeightedMetrics,
    pub per_class: Vec<ClassStats>,
}

impl EvaluationReport {
    pub fn from_predictions(
        y_true: &[usize],
        y_pred: &[usize],
        class_names: &[String],
        normal_class: usize,
    ) -> Result<Self> {
        let matrix = ConfusionMatrix::from_predictions(y_true, y_pred, class_names.len())?
            .with_class_names(class_names)?;
        Self::from_confusion(matrix, normal_class)
    }

    pub fn from_confusion(confusion: ConfusionMatrix, normal_class: usize) -> Result<Self> {
        let binary = collapse_to_binary(&confusion, normal_class)?;
        let rates = compute_rates(&binary);
        Ok(EvaluationReport {
            schema_version: 1,
            class_names: confusion.class_names().to_vec(),
            normal_class,
            multiclass_accuracy: confusion.accuracy(),
            macro_f1: macro_f1(&confusion),
            weighted: weighted_metrics(&confusion),
            per_class: per_class_stats(&confusion),
            binary,
            rates,
            confusion,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
