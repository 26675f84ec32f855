//! Multinomial logistic regression: softmax cross-entropy, full-batch Adam,
//! L2 penalty on weights, fixed iteration cap.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{argmax_first, validate_prediction_width, Classifier, ModelEnvelope, Result};
use crate::neural::{
    self, AdamConfig, AdamState, ForwardMode, MlpParams, MlpSpec, OutputActivation,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticRegressionConfig {
    pub l2: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LogisticRegressionConfig {
    fn default() -> Self {
        LogisticRegressionConfig {
            l2: 1e-4,
            iterations: 400,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// A fitted multinomial logistic regression: one affine layer with softmax
/// applied at prediction time.
pub struct LogisticRegressionModel {
    spec: MlpSpec,
    params: MlpParams,
    class_count: usize,
}

fn linear_spec(feature_count: usize, class_count: usize) -> MlpSpec {
    MlpSpec {
        input_dim: feature_count,
        layer_sizes: vec![],
        leaky_slope: 0.2,
        output_activation: OutputActivation::Linear,
        dropout_rate: 0.0,
        output_dim: class_count,
    }
}

pub(crate) fn one_hot(labels: &[usize], class_count: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), class_count));
    for (r, &l) in labels.iter().enumerate() {
        out[[r, l]] = 1.0;
    }
    out
}

/// Softmax cross-entropy training shared by logistic regression and the MLP
/// classifier: full-batch Adam with an L2 penalty on weight matrices.
pub(crate) fn train_softmax_network(
    spec: &MlpSpec,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    seed: u64,
    iterations: usize,
    learning_rate: f64,
    l2: f64,
) -> Result<MlpParams> {
    let mut params = neural::init_params(spec, seed)?;
    let mut adam = AdamState::new(
        spec,
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        },
    );
    let targets = one_hot(labels, class_count);
    let scale = 1.0 / features.nrows() as f64;
    for _ in 0..iterations {
        let (logits, trace) = neural::forward(&params, spec, features, ForwardMode::Eval)?;
        let output_gradient = (neural::softmax_rows(&logits) - &targets) * scale;
        let (mut grads, _) = neural::backward(&params, spec, &trace, &output_gradient)?;
        if l2 > 0.0 {
            for (grad_layer, param_layer) in grads.layers.iter_mut().zip(&params.layers) {
                grad_layer.weights.scaled_add(l2, &param_layer.weights);
            }
        }
        neural::adam_step(&mut adam, &mut params, &grads)?;
    }
    Ok(params)
}

/// Fits the model. Single-class data is a documented degenerate case: the
/// softmax over one logit is constant 1, so the model always predicts that
/// class.
pub(super) fn fit(
    config: &LogisticRegressionConfig,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<LogisticRegressionModel> {
    let spec = linear_spec(features.ncols(), class_count);
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
    Ok(LogisticRegressionModel {
        spec,
        params,
        class_count,
    })
}

impl LogisticRegressionModel {
    fn logits(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        let (logits, _) = neural::forward(&self.params, &self.spec, rows, ForwardMode::Eval)?;
        Ok(logits)
    }
}

impl Classifier for LogisticRegressionModel {
    fn kind(&self) -> &'static str {
        "logistic_regression"
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
            kind: "logistic_regression".into(),
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
) -> Result<LogisticRegressionModel> {
    let (spec, params, _) = neural::read_params(reader)?;
    Ok(LogisticRegressionModel {
        spec,
        params,
        class_count: envelope.class_count,
    })
}
