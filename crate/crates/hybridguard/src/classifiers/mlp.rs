//! MLP classifier: one leaky-ReLU hidden layer and a softmax output, trained
//! with full-batch Adam through the neural engine.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::logistic::train_softmax_network;
use super::{argmax_first, validate_prediction_width, Classifier, ModelEnvelope, Result};
use crate::neural::{self, ForwardMode, MlpParams, MlpSpec, OutputActivation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpClassifierConfig {
    pub hidden_units: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for MlpClassifierConfig {
    fn default() -> Self {
        MlpClassifierConfig {
            hidden_units: 64,
            iterations: 300,
            learning_rate: 0.01,
            l2: 0.0,
            leaky_slope: 0.2,
            seed: 0,
        }
    }
}

/// A fitted MLP classifier.
pub struct MlpClassifierModel {
    spec: MlpSpec,
    params: MlpParams,
    class_count: usize,
}

pub(super) fn fit(
    config: &MlpClassifierConfig,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<MlpClassifierModel> {
    let spec = MlpSpec {
        input_dim: features.ncols(),
        layer_sizes: vec![config.hidden_units],
        leaky_slope: config.leaky_slope,
        output_activation: OutputActivation::Linear,
        dropout_rate: 0.0,
        output_dim: class_count,
    };
    let params = train_softmax_network(
        &spec,
        features,
        labels,
        class_count,
        config.seed,
        config.iterations,
        config.learning_rate,
        config.l2,
    )?;
    Ok(MlpClassifierModel {
        spec,
        params,
        class_count,
    })
}

impl MlpClassifierModel {
    fn logits(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        let (logits, _) = neural::forward(&self.params, &self.spec, rows, ForwardMode::Eval)?;
        Ok(logits)
    }
}

impl Classifier for MlpClassifierModel {
    fn kind(&self) -> &'static str {
        "mlp"
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn feature_count(&self) -> usize {
        self.spec.input_dim
    }

    fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>> {
        validate_prediction_width(self.spec.input_dim, rows)?;
        Ok(self
            .logits(rows)?
            .outer_iter()
            .map(|row| argmax_first(row.iter().copied()))
            .collect())
    }

    fn predict_proba(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        validate_prediction_width(self.spec.input_dim, rows)?;
        Ok(neural::softmax_rows(&self.logits(rows)?))
    }

    fn write_model(&self, writer: &mut dyn std::io::Write) -> Result<()> {
        let envelope = ModelEnvelope {
            format_version: 1,
            kind: "mlp".into(),
            feature_count: self.spec.input_dim,
            class_count: self.class_count,
            payload: None,
        };
        super::write_envelope(writer, &envelope)?;
        let mut buffer = Vec::new();
        neural::write_params(&mut buffer, &self.spec, &self.params, None)?;
        writer.write_all(&buffer)?;
        Ok(())
    }
}

pub(super) fn read<R: std::io::BufRead>(
    reader: &mut R,
    envelope: &ModelEnvelope,
) -> Result<MlpClassifierModel> {
    let (spec, params, _) = neural::read_params(reader)?;
    Ok(MlpClassifierModel {
        spec,
        params,
        class_count: envelope.class_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn learns_a_nonlinear_boundary() {
        // Ring vs center: not linearly separable.
        let mut rng = crate::rng::derive_rng(40, &[44]);
        let rows = 300;
        let mut features = Array2::zeros((rows, 2));
        let mut labels = Vec::with_capacity(rows);
        for r in 0..rows {
            let inner = r % 2 == 0;
            let radius = if inner { rng.random_range(0.0..0.8) } else { rng.random_range(2.0..3.0) };
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            features[[r, 0]] = radius * angle.cos();
            features[[r, 1]] = radius * angle.sin();
            labels.push(usize::from(!inner));
        }
        let config = MlpClassifierConfig {
            iterations: 600,
            learning_rate: 0.02,
            ..MlpClassifierConfig::default()
        };
        let model = fit(&config, &features, &labels, 2).unwrap();
        let predictions = model.predict(&features).unwrap();
        let correct = predictions.iter().zip(&labels).filter(|(a, b)| a == b).count();
        assert!(correct as f64 / rows as f64 >= 0.95, "{correct}/{rows}");
    }
}
