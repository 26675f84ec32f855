//! Gaussian naive Bayes: per-class feature means and variances with a
//! variance floor, log-posterior prediction with empirical class priors.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{argmax_first, validate_prediction_width, Classifier, ModelEnvelope, Result};
use crate::Error;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianNbConfig {}

/// A fitted Gaussian naive Bayes model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    log_priors: Vec<f64>,
    /// Per class, per feature.
    means: Vec<Vec<f64>>,
    /// Floored per-class, per-feature variances.
    variances: Vec<Vec<f64>>,
    class_count: usize,
    feature_count: usize,
}

pub(super) fn fit(
    _config: &GaussianNbConfig,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<GaussianNbModel> {
    let n = features.nrows();
    let d = features.ncols();
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "class {missing} has no training rows"
        )));
    }

    // Variance floor: the largest per-feature variance over all rows, scaled
    // down, keeps likelihoods finite for within-class constant features.
    let mut max_feature_variance = 0.0f64;
    for c in 0..d {
        let column = features.column(c);
        let mean = column.sum() / n as f64;
        let variance = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        max_feature_variance = max_feature_variance.max(variance);
    }
    let mut floor = 1e-9 * max_feature_variance;
    if floor == 0.0 {
        floor = 1e-12;
    }

    let mut means = vec![vec![0.0; d]; class_count];
    let mut variances = vec![vec![0.0; d]; class_count];
    for (row, &label) in features.outer_iter().zip(labels) {
        for (c, &v) in row.iter().enumerate() {
            means[label][c] += v;
        }
    }
    for class in 0..class_count {
        for c in 0..d {
            means[class][c] /= counts[class] as f64;
        }
    }
    for (row, &label) in features.outer_iter().zip(labels) {
        for (c, &v) in row.iter().enumerate() {
            variances[label][c] += (v - means[label][c]).powi(2);
        }
    }
    for class in 0..class_count {
        for c in 0..d {
            variances[class][c] = variances[class][c] / counts[class] as f64 + floor;
        }
    }

    let log_priors = counts
        .iter()
        .map(|&c| (c as f64 / n as f64).ln())
        .collect();
    Ok(GaussianNbModel {
        log_priors,
        means,
        variances,
        class_count,
        feature_count: d,
    })
}

impl GaussianNbModel {
    fn log_posteriors(&self, rows: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((rows.nrows(), self.class_count));
        for (r, row) in rows.outer_iter().enumerate() {
            for class in 0..self.class_count {
                let mut log_p = self.log_priors[class];
                for (c, &v) in row.iter().enumerate() {
                    let variance = self.variances[class][c];
                    let deviation = v - self.means[class][c];
                    log_p += -0.5 * (std::f64::consts::TAU * variance).ln()
                        - deviation * deviation / (2.0 * variance);
                }
                out[[r, class]] = log_p;
            }
        }
        out
    }
}

impl Classifier for GaussianNbModel {
    fn kind(&self) -> &'static str {
        "gaussian_nb"
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>> {
        validate_prediction_width(self.feature_count, rows)?;
        Ok(self
            .log_posteriors(rows)
            .outer_iter()
            .map(|row| argmax_first(row.iter().copied()))
            .collect())
    }

    fn predict_proba(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        validate_prediction_width(self.feature_count, rows)?;
        let mut log_p = self.log_posteriors(rows);
        for mut row in log_p.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        Ok(log_p)
    }

    fn write_model(&self, writer: &mut dyn std::io::Write) -> Result<()> {
        let envelope = ModelEnvelope {
            format_version: 1,
            kind: "gaussian_nb".into(),
            feature_count: self.feature_count,
            class_count: self.class_count,
            payload: Some(serde_json::to_value(self)?),
        };
        super::write_envelope(writer, &envelope)
    }
}

pub(super) fn read(envelope: &ModelEnvelope) -> Result<GaussianNbModel> {
    let payload = envelope
        .payload
        .as_ref()
        .ok_or_else(|| Error::ModelFormat("gaussian_nb model missing payload".into()))?;
    Ok(serde_json::from_value(payload.clone())?)
}
