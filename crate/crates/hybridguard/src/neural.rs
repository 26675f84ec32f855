//! Minimal dense-network engine with exact reverse-mode gradients, the
//! second-order pass needed by the gradient penalty, and the Adam update.
//!
//! Layers are affine maps followed by leaky-ReLU (hidden) and tanh or identity
//! (output). Hidden layers may apply inverted dropout in train mode. All
//! arithmetic is in 64-bit floats; every stochastic choice is driven by an
//! explicit seed.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_rng, tags};
use crate::{Error, Result};

/// Output-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Tanh,
    Linear,
}

/// Network architecture: input width, hidden layer sizes, activations,
/// per-hidden-layer dropout rate, and output width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    /// Hidden layer sizes, in order; may be empty for a single affine layer.
    pub layer_sizes: Vec<usize>,
    /// Negative slope of the hidden leaky-ReLU. 0 gives ReLU, 1 a linear
    /// hidden layer.
    pub leaky_slope: f64,
    pub output_activation: OutputActivation,
    /// Dropout rate in [0, 1) applied after each hidden activation in train
    /// mode, with inverted scaling so eval needs no rescale.
    pub dropout_rate: f64,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument("network dims must be positive".into()));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("hidden layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `(in, out)` per affine layer, hidden layers first, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.layer_sizes.len() + 1);
        let mut prev = self.input_dim;
        for &size in &self.layer_sizes {
            dims.push((prev, size));
            prev = size;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn hidden_count(&self) -> usize {
        self.layer_sizes.len()
    }
}

/// One affine layer: weight matrix `(out x in)` and bias vector `(out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameters of a network; also used as the container for gradient and Adam
/// moment values, which share the same shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<LayerParams>,
}

impl MlpParams {
    /// All-zero values shaped like `spec`.
    pub fn zeros(spec: &MlpSpec) -> MlpParams {
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(input, output)| LayerParams {
                weights: Array2::zeros((output, input)),
                bias: Array1::zeros(output),
            })
            .collect();
        MlpParams { layers }
    }

    pub fn matches(&self, spec: &MlpSpec) -> bool {
        let dims = spec.layer_dims();
        self.layers.len() == dims.len()
            && self
                .layers
                .iter()
                .zip(dims)
                .all(|(l, (input, output))| {
                    l.weights.dim() == (output, input) && l.bias.len() == output
                })
    }

    /// Elementwise accumulate: `self += other`.
    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-style uniform initialization: weights from
/// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`, biases zero.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<MlpParams> {
    spec.validate()?;
    let mut rng = derive_rng(seed, &[tags::INIT_PARAMS]);
    let layers = spec
        .layer_dims()
        .into_iter()
        .map(|(input, output)| {
            let bound = (6.0 / (input + output) as f64).sqrt();
            let weights =
                Array2::from_shape_fn((output, input), |_| rng.random_range(-bound..bound));
            LayerParams {
                weights,
                bias: Array1::zeros(output),
            }
        })
        .collect();
    Ok(MlpParams { layers })
}

/// Forward-pass mode. Dropout only fires in train mode and only when the
/// spec's rate is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train { dropout_seed: u64 },
    Eval,
}

/// Cached intermediates from one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Array2<f64>,
    /// Pre-activation `z` per affine layer.
    pre_activations: Vec<Array2<f64>>,
    /// Post-activation, post-dropout output per hidden layer.
    hidden_outputs: Vec<Array2<f64>>,
    /// Dropout multipliers (0 or 1/(1-rate)) per hidden layer; present only
    /// for train-mode passes with a nonzero rate.
    dropout_masks: Option<Vec<Array2<f64>>>,
    output: Array2<f64>,
}

fn leaky_relu(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

fn leaky_relu_derivative(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

fn affine(input: &Array2<f64>, layer: &LayerParams) -> Array2<f64> {
    input.dot(&layer.weights.t()) + &layer.bias
}

/// Runs the network on a batch (rows x input_dim), returning outputs and the
/// trace needed for a matching backward pass.
pub fn forward(
    params: &MlpParams,
    spec: &MlpSpec,
    batch: &Array2<f64>,
    mode: ForwardMode,
) -> Result<(Array2<f64>, ForwardTrace)> {
    spec.validate()?;
    if !params.matches(spec) {
        return Err(Error::ShapeMismatch("params do not match spec".into()));
    }
    if batch.ncols() != spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "batch width {} != input_dim {}",
            batch.ncols(),
            spec.input_dim
        )));
    }
    if batch.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forward input contains NaN or infinity".into()));
    }

    let hidden = spec.hidden_count();
    let use_dropout = matches!(mode, ForwardMode::Train { .. }) && spec.dropout_rate > 0.0;
    let mut masks: Vec<Array2<f64>> = Vec::with_capacity(if use_dropout { hidden } else { 0 });
    let mut pre_activations = Vec::with_capacity(hidden + 1);
    let mut hidden_outputs = Vec::with_capacity(hidden);

    let mut current = batch.clone();
    for layer_index in 0..hidden {
        let z = affine(&current, &params.layers[layer_index]);
        let mut activated = z.mapv(|v| leaky_relu(v, spec.leaky_slope));
        if use_dropout {
            let ForwardMode::Train { dropout_seed } = mode else { unreachable!() };
            let mut rng = derive_rng(dropout_seed, &[tags::DROPOUT, layer_index as u64]);
            let keep_scale = 1.0 / (1.0 - spec.dropout_rate);
            let mask = Array2::from_shape_fn(activated.dim(), |_| {
                if rng.random::<f64>() < spec.dropout_rate {
                    0.0
                } else {
                    keep_scale
                }
            });
            activated *= &mask;
            masks.push(mask);
        }
        pre_activations.push(z);
        hidden_outputs.push(activated.clone());
        current = activated;
    }

    let z_out = affine(&current, &params.layers[hidden]);
    let output = match spec.output_activation {
        OutputActivation::Tanh => z_out.mapv(f64::tanh),
        OutputActivation::Linear => z_out.clone(),
    };
    pre_activations.push(z_out);

    let trace = ForwardTrace {
        input: batch.clone(),
        pre_activations,
        hidden_outputs,
        dropout_masks: if use_dropout { Some(masks) } else { None },
        output: output.clone(),
    };
    Ok((output, trace))
}

/// Exact reverse-mode gradients of the scalar objective whose output gradient
/// is supplied, with respect to all weights, biases, and the input batch.
/// Dropout masks recorded in the trace are reused.
pub fn backward(
    params: &MlpParams,
    spec: &MlpSpec,
    trace: &ForwardTrace,
    output_gradient: &Array2<f64>,
) -> Result<(MlpParams, Array2<f64>)> {
    if output_gradient.dim() != trace.output.dim() {
        return Err(Error::ShapeMismatch(format!(
            "output gradient shape {:?} != output shape {:?}",
            output_gradient.dim(),
            trace.output.dim()
        )));
    }
    let hidden = spec.hidden_count();
    let mut grads = MlpParams::zeros(spec);

    // Gradient at the output layer's pre-activation.
    let mut delta = match spec.output_activation {
        OutputActivation::Tanh => {
            let y = &trace.output;
            output_gradient * &y.mapv(|v| 1.0 - v * v)
        }
        OutputActivation::Linear => output_gradient.clone(),
    };

    for layer_index in (0..=hidden).rev() {
        let previous_output = if layer_index == 0 {
            &trace.input
        } else {
            &trace.hidden_outputs[layer_index - 1]
        };
        grads.layers[layer_index].weights = delta.t().dot(previous_output);
        grads.layers[layer_index].bias = delta.sum_axis(Axis(0));

        let mut upstream = delta.dot(&params.layers[layer_index].weights);
        if layer_index == 0 {
            return Ok((grads, upstream));
        }
        if let Some(masks) = &trace.dropout_masks {
            upstream *= &masks[layer_index - 1];
        }
        let z = &trace.pre_activations[layer_index - 1];
        upstream.zip_mut_with(z, |g, &zv| *g *= leaky_relu_derivative(zv, spec.leaky_slope));
        delta = upstream;
    }
    unreachable!("loop returns at layer 0");
}

/// Gradient-penalty value and its exact parameter gradient for a scalar-output
/// critic with piecewise-linear hidden activations.
///
/// Computes `p = weight * mean_rows((||g_row|| - 1)^2)` where `g_row` is the
/// gradient of the critic output with respect to the first `norm_dims` input
/// columns of that row, then differentiates `p` with respect to every weight
/// via a second backward pass. Activation masks are treated as locally
/// constant (the leaky-ReLU second derivative is zero almost everywhere), so
/// bias gradients vanish identically. Dropout is never applied on this pass.
/// Rows with zero gradient norm contribute zero derivative.
pub fn penalty_param_gradient(
    params: &MlpParams,
    spec: &MlpSpec,
    interpolated: &Array2<f64>,
    weight: f64,
    norm_dims: usize,
) -> Result<(f64, MlpParams)> {
    if spec.output_dim != 1 || spec.output_activation != OutputActivation::Linear {
        return Err(Error::InvalidArgument(
            "gradient penalty requires a scalar linear-output critic".into(),
        ));
    }
    if norm_dims == 0 || norm_dims > spec.input_dim {
        return Err(Error::InvalidArgument(format!(
            "norm_dims {} out of range for input_dim {}",
            norm_dims, spec.input_dim
        )));
    }
    let rows = interpolated.nrows();
    if rows == 0 {
        return Ok((0.0, MlpParams::zeros(spec)));
    }

    // Plain forward pass (no dropout) to fix the activation masks.
    let (_, trace) = forward(params, spec, interpolated, ForwardMode::Eval)?;
    let hidden = spec.hidden_count();

    // Input-gradient chain: u[last] = 1, s_l = u_l . W_l,
    // u_{l-1} = s_l * phi'(z_{l-1}); the input gradient is s_0.
    let mut u_stack: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); hidden + 1];
    u_stack[hidden] = Array2::ones((rows, 1));
    let mut s = u_stack[hidden].dot(&params.layers[hidden].weights);
    for layer_index in (0..hidden).rev() {
        let z = &trace.pre_activations[layer_index];
        let mut u = s;
        u.zip_mut_with(z, |g, &zv| *g *= leaky_relu_derivative(zv, spec.leaky_slope));
        s = u.dot(&params.layers[layer_index].weights);
        u_stack[layer_index] = u;
    }
    let input_gradients = s; // rows x input_dim

    // Penalty over the norm of the first `norm_dims` gradient columns.
    let mut penalty = 0.0;
    let mut seed_rows = Array2::zeros((rows, spec.input_dim));
    let scale = 2.0 * weight / rows as f64;
    for (row_index, g_row) in input_gradients.outer_iter().enumerate() {
        let norm = g_row
            .iter()
            .take(norm_dims)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        penalty += (norm - 1.0).powi(2);
        if norm > 0.0 {
            let coefficient = scale * (norm - 1.0) / norm;
            for col in 0..norm_dims {
                seed_rows[[row_index, col]] = coefficient * g_row[col];
            }
        }
    }
    penalty *= weight / rows as f64;

    // Tangent chain mirrors the gradient chain forward: each W_l picks up
    // u_l^T . t_{l-1}, with t propagated through the same masks.
    let mut grads = MlpParams::zeros(spec);
    let mut tangent = seed_rows;
    for layer_index in 0..=hidden {
        grads.layers[layer_index].weights = u_stack[layer_index].t().dot(&tangent);
        // Bias gradients stay zero.
        if layer_index < hidden {
            let mut t_next = tangent.dot(&params.layers[layer_index].weights.t());
            let z = &trace.pre_activations[layer_index];
            t_next.zip_mut_with(z, |g, &zv| *g *= leaky_relu_derivative(zv, spec.leaky_slope));
            tangent = t_next;
        }
    }
    Ok((penalty, grads))
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam optimizer state: step count plus first/second moment accumulators
/// shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: MlpParams,
    pub second_moment: MlpParams,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(spec: &MlpSpec, config: AdamConfig) -> AdamState {
        AdamState {
            step_count: 0,
            first_moment: MlpParams::zeros(spec),
            second_moment: MlpParams::zeros(spec),
            config,
        }
    }
}

/// One Adam update: advances the step count, updates biased moments, and
/// applies the bias-corrected step to `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient contains NaN or infinity".into()));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for ((param, grad), (m, v)) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.first_moment.layers.iter_mut().zip(&mut state.second_moment.layers))
    {
        azip_update(&mut m.weights, &mut v.weights, &mut param.weights, &grad.weights, beta1, beta2, learning_rate, epsilon, correction1, correction2);
        for i in 0..param.bias.len() {
            let g = grad.bias[i];
            m.bias[i] = beta1 * m.bias[i] + (1.0 - beta1) * g;
            v.bias[i] = beta2 * v.bias[i] + (1.0 - beta2) * g * g;
            let m_hat = m.bias[i] / correction1;
            let v_hat = v.bias[i] / correction2;
            param.bias[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    beta1: f64,
    beta2: f64,
    learning_rate: f64,
    epsilon: f64,
    correction1: f64,
    correction2: f64,
) {
    ndarray::Zip::from(param)
        .and(m)
        .and(v)
        .and(grad)
        .for_each(|p, m, v, &g| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        });
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ParamsHeader {
    format_version: u32,
    spec: MlpSpec,
    layer_shapes: Vec<(usize, usize)>,
    seed: Option<u64>,
}

/// Writes parameters as a one-line JSON header (spec, shapes, format version,
/// optional init seed) followed by little-endian 64-bit float arrays per
/// layer in declaration order: weights row-major, then bias.
pub fn write_params<W: Write>(
    writer: &mut W,
    spec: &MlpSpec,
    params: &MlpParams,
    seed: Option<u64>,
) -> Result<()> {
    if !params.matches(spec) {
        return Err(Error::ShapeMismatch("params do not match spec".into()));
    }
    let header = ParamsHeader {
        format_version: 1,
        spec: spec.clone(),
        layer_shapes: params
            .layers
            .iter()
            .map(|l| (l.weights.nrows(), l.weights.ncols()))
            .collect(),
        seed,
    };
    serde_json::to_writer(&mut *writer, &header)?;
    writer.write_all(b"\n")?;
    for layer in &params.layers {
        for value in layer.weights.iter() {
            writer.write_all(&value.to_le_bytes())?;
        }
        for value in layer.bias.iter() {
            writer.write_all(&value.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads parameters written by [`write_params`].
pub fn read_params<R: BufRead>(reader: &mut R) -> Result<(MlpSpec, MlpParams, Option<u64>)> {
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: ParamsHeader = serde_json::from_str(header_line.trim_end())
        .map_err(|e| Error::ModelFormat(format!("bad parameter header: {e}")))?;
    if header.format_version != 1 {
        return Err(Error::ModelFormat(format!(
            "unsupported parameter format version {}",
            header.format_version
        )));
    }
    let mut layers = Vec::with_capacity(header.layer_shapes.len());
    for &(output, input) in &header.layer_shapes {
        let mut weight_bytes = vec![0u8; output * input * 8];
        reader.read_exact(&mut weight_bytes)?;
        let weights = Array2::from_shape_vec(
            (output, input),
            weight_bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let mut bias_bytes = vec![0u8; output * 8];
        reader.read_exact(&mut bias_bytes)?;
        let bias = Array1::from(
            bias_bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f64>>(),
        );
        layers.push(LayerParams { weights, bias });
    }
    let params = MlpParams { layers };
    if !params.matches(&header.spec) {
        return Err(Error::ModelFormat("layer shapes do not match spec".into()));
    }
    Ok((header.spec, params, header.seed))
}
