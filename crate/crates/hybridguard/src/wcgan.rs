//! Conditional Wasserstein GAN with gradient penalty.
//!
//! The critic maximizes its score gap between real and generated rows while a
//! gradient penalty keeps it approximately 1-Lipschitz; the generator
//! minimizes the negated mean critic score of its samples. Both networks are
//! conditioned by concatenating a one-hot class label to their inputs.
//! Features are min-max scaled to [-1, 1] before training so the generator's
//! tanh output covers the data range; synthesis inverts the scaling.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::neural::{
    self, AdamConfig, AdamState, ForwardMode, MlpParams, MlpSpec, OutputActivation,
};
use crate::rng::{derive_rng, tags};
use crate::tabular::{fit_scaler, Dataset, ScalerMethod, ScalerModel};
use crate::{Error, Result};

/// Per-network Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkAdam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for NetworkAdam {
    fn default() -> Self {
        NetworkAdam {
            learning_rate: 2e-4,
            beta1: 0.05,
            beta2: 0.9,
        }
    }
}

impl NetworkAdam {
    fn to_adam_config(self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: 1e-8,
        }
    }
}

/// Training configuration. Defaults follow the shipped benchmark presets:
/// latent dimension 64, five critic steps per generator step, penalty
/// weight 10, generator hidden sizes [256, 512, 1024] and critic hidden
/// sizes [1024, 512, 256] with leaky-ReLU(0.2) and dropout 0.3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub batch_size: usize,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    /// Gradient penalty coefficient.
    pub gradient_penalty_weight: f64,
    pub epochs: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    pub generator_adam: NetworkAdam,
    pub critic_adam: NetworkAdam,
    /// Class ids the generator is asked to produce during its update steps;
    /// `None` conditions uniformly over all classes.
    pub condition_classes: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            latent_dim: 64,
            batch_size: 256,
            critic_steps: 5,
            gradient_penalty_weight: 10.0,
            epochs: 1000,
            generator_hidden: vec![256, 512, 1024],
            critic_hidden: vec![1024, 512, 256],
            dropout_rate: 0.3,
            leaky_slope: 0.2,
            generator_adam: NetworkAdam::default(),
            critic_adam: NetworkAdam::default(),
            condition_classes: None,
            seed: 42,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "latent_dim and batch_size must be positive".into(),
            ));
        }
        if self.critic_steps == 0 {
            return Err(Error::InvalidArgument("critic_steps must be at least 1".into()));
        }
        if self.gradient_penalty_weight < 0.0 {
            return Err(Error::InvalidArgument(
                "gradient_penalty_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A batch of samples with aligned one-hot labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedBatch {
    pub samples: Array2<f64>,
    pub labels_onehot: Array2<f64>,
}

impl ConditionedBatch {
    pub fn new(samples: Array2<f64>, labels_onehot: Array2<f64>) -> Result<Self> {
        if samples.nrows() != labels_onehot.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} sample rows vs {} label rows",
                samples.nrows(),
                labels_onehot.nrows()
            )));
        }
        for row in labels_onehot.rows() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(
                    "one-hot label rows must sum to 1".into(),
                ));
            }
        }
        Ok(ConditionedBatch {
            samples,
            labels_onehot,
        })
    }

    pub fn from_labels(samples: Array2<f64>, labels: &[usize], class_count: usize) -> Result<Self> {
        let mut onehot = Array2::zeros((labels.len(), class_count));
        for (r, &l) in labels.iter().enumerate() {
            if l >= class_count {
                return Err(Error::InvalidArgument(format!(
                    "label {l} out of range for {class_count} classes"
                )));
            }
            onehot[[r, l]] = 1.0;
        }
        ConditionedBatch::new(samples, onehot)
    }

    /// Critic input: `[samples | one-hot labels]`.
    pub fn to_critic_input(&self) -> Array2<f64> {
        ndarray::concatenate(
            Axis(1),
            &[self.samples.view(), self.labels_onehot.view()],
        )
        .expect("row counts validated at construction")
    }
}

/// The critic loss split into its reported terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticLossTerms {
    /// Mean critic score on real rows.
    pub real_term: f64,
    /// Mean critic score on generated rows.
    pub fake_term: f64,
    /// Weighted gradient penalty.
    pub penalty: f64,
    /// `-real_term + fake_term + penalty`.
    pub total: f64,
}

/// Assembles the critic loss from mean scores and an already-weighted
/// penalty value.
pub fn critic_loss_terms(real_scores: &Array1<f64>, fake_scores: &Array1<f64>, penalty: f64) -> CriticLossTerms {
    let real_term = mean(real_scores);
    let fake_term = mean(fake_scores);
    CriticLossTerms {
        real_term,
        fake_term,
        penalty,
        total: -real_term + fake_term + penalty,
    }
}

fn mean(values: &Array1<f64>) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.sum() / values.len() as f64
    }
}

/// Evaluates the critic on a conditioned batch (no dropout), returning one
/// score per row.
pub fn critic_scores(
    critic_spec: &MlpSpec,
    critic_params: &MlpParams,
    batch: &ConditionedBatch,
) -> Result<Array1<f64>> {
    let (out, _) = neural::forward(
        critic_params,
        critic_spec,
        &batch.to_critic_input(),
        ForwardMode::Eval,
    )?;
    Ok(out.column(0).to_owned())
}

/// Full critic loss on real and fake batches. The penalty hook receives the
/// interpolated critic input rows and returns the weighted penalty value, so
/// tests can substitute closed forms; batch sizes must agree.
pub fn critic_loss(
    critic_spec: &MlpSpec,
    critic_params: &MlpParams,
    real: &ConditionedBatch,
    fake: &ConditionedBatch,
    penalty_hook: impl FnOnce(&Array2<f64>) -> Result<f64>,
    interpolation_seed: u64,
) -> Result<CriticLossTerms> {
    if real.samples.nrows() != fake.samples.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "real batch has {} rows, fake batch has {}",
            real.samples.nrows(),
            fake.samples.nrows()
        )));
    }
    let real_scores = critic_scores(critic_spec, critic_params, real)?;
    let fake_scores = critic_scores(critic_spec, critic_params, fake)?;
    let mut rng = derive_rng(interpolation_seed, &[tags::GAN_EPOCH]);
    let interpolated = interpolate(&real.samples, &fake.samples, &mut rng)?;
    let interpolated_input = ConditionedBatch::new(interpolated, real.labels_onehot.clone())?
        .to_critic_input();
    let penalty = penalty_hook(&interpolated_input)?;
    Ok(critic_loss_terms(&real_scores, &fake_scores, penalty))
}

/// Generator loss: negated mean critic score of the generated batch.
pub fn generator_loss(
    critic_spec: &MlpSpec,
    critic_params: &MlpParams,
    fake: &ConditionedBatch,
) -> Result<f64> {
    let scores = critic_scores(critic_spec, critic_params, fake)?;
    Ok(-mean(&scores))
}

/// Per-row convex combination `eps*real + (1-eps)*fake` with
/// `eps ~ Uniform[0,1)` drawn per row. Labels for the penalty pass are the
/// real rows' labels.
pub fn interpolate(
    real_rows: &Array2<f64>,
    fake_rows: &Array2<f64>,
    rng: &mut ChaCha20Rng,
) -> Result<Array2<f64>> {
    if real_rows.dim() != fake_rows.dim() {
        return Err(Error::ShapeMismatch(format!(
            "real shape {:?} vs fake shape {:?}",
            real_rows.dim(),
            fake_rows.dim()
        )));
    }
    let mut out = fake_rows.clone();
    for (mut out_row, real_row) in out.outer_iter_mut().zip(real_rows.outer_iter()) {
        let eps: f64 = rng.random_range(0.0..1.0);
        for (o, &r) in out_row.iter_mut().zip(real_row.iter()) {
            *o = eps * r + (1.0 - eps) * *o;
        }
    }
    Ok(out)
}

/// Kind of optimizer step, for the training log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Critic,
    Generator,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepKind::Critic => write!(f, "critic"),
            StepKind::Generator => write!(f, "generator"),
        }
    }
}

/// One optimizer step in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub step_kind: StepKind,
    /// Index of the step within its kind, counted from the start of training.
    pub step_index: usize,
    pub loss: f64,
}

/// Per-epoch summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_critic_loss: f64,
    pub mean_generator_loss: f64,
    pub wall_ms: u64,
}

/// Full training log: every optimizer step plus per-epoch summaries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<TrainLogEntry>,
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    /// CSV export with columns `epoch,step_kind,step_index,loss` for loss
    /// curve plotting. Wall times are deliberately excluded so logs from
    /// identical runs are byte-identical.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "step_kind", "step_index", "loss"])?;
        for step in &self.steps {
            w.write_record([
                step.epoch.to_string(),
                step.step_kind.to_string(),
                step.step_index.to_string(),
                step.loss.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A trained conditional generator/critic pair plus everything needed to
/// synthesize rows in original feature units.
#[derive(Debug, Clone)]
pub struct TrainedGan {
    pub config: GanConfig,
    pub generator_spec: MlpSpec,
    pub generator_params: MlpParams,
    pub critic_spec: MlpSpec,
    pub critic_params: MlpParams,
    pub scaler: ScalerModel,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl TrainedGan {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }
}

/// Incremental trainer. Epochs derive their randomness from (seed, epoch), so
/// training can stop at any epoch boundary, be checkpointed, and resume with
/// bit-identical results.
pub struct GanTrainer {
    config: GanConfig,
    scaled_features: Array2<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    scaler: ScalerModel,
    generator_spec: MlpSpec,
    critic_spec: MlpSpec,
    generator_params: MlpParams,
    critic_params: MlpParams,
    generator_adam: AdamState,
    critic_adam: AdamState,
    next_epoch: usize,
    critic_step_count: usize,
    generator_step_count: usize,
    log: TrainLog,
}

/// Serializable trainer state for checkpoint/resume.
#[derive(Serialize, Deserialize)]
pub struct GanCheckpoint {
    pub format_version: u32,
    pub fingerprint: u64,
    pub next_epoch: usize,
    critic_step_count: usize,
    generator_step_count: usize,
    generator_params: MlpParams,
    critic_params: MlpParams,
    generator_adam: AdamState,
    critic_adam: AdamState,
    log: TrainLog,
}

/// Order-dependent FNV-1a over the config and dataset contents; guards
/// checkpoints against being resumed on different inputs.
fn fingerprint(config: &GanConfig, dataset: &Dataset) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(serde_json::to_string(config).unwrap_or_default().as_bytes());
    eat(&dataset.rows().to_le_bytes());
    eat(&dataset.feature_count().to_le_bytes());
    for name in dataset.feature_names.iter().chain(&dataset.class_names) {
        eat(name.as_bytes());
    }
    for value in dataset.features.iter() {
        eat(&value.to_le_bytes());
    }
    for &label in &dataset.labels {
        eat(&label.to_le_bytes());
    }
    hash
}

impl GanTrainer {
    /// Prepares training on a cleaned, encoded dataset: fits the min-max
    /// scaler, scales features to [-1, 1], and initializes both networks.
    pub fn new(config: GanConfig, dataset: &Dataset) -> Result<GanTrainer> {
        config.validate()?;
        if dataset.rows() < config.batch_size {
            return Err(Error::BatchTooLarge {
                rows: dataset.rows(),
                batch: config.batch_size,
            });
        }
        let class_count = dataset.class_count();
        if let Some(classes) = &config.condition_classes {
            if classes.is_empty() {
                return Err(Error::InvalidArgument("condition_classes must be non-empty".into()));
            }
            if let Some(&bad) = classes.iter().find(|&&c| c >= class_count) {
                return Err(Error::InvalidArgument(format!(
                    "condition class {bad} out of range for {class_count} classes"
                )));
            }
        }
        let scaler = fit_scaler(dataset, ScalerMethod::MinmaxSymmetric)?;
        let scaled_features = scaler.transform_features(&dataset.features)?;
        let d = dataset.feature_count();

        let generator_spec = MlpSpec {
            input_dim: config.latent_dim + class_count,
            layer_sizes: config.generator_hidden.clone(),
            leaky_slope: config.leaky_slope,
            output_activation: OutputActivation::Tanh,
            dropout_rate: config.dropout_rate,
            output_dim: d,
        };
        let critic_spec = MlpSpec {
            input_dim: d + class_count,
            layer_sizes: config.critic_hidden.clone(),
            leaky_slope: config.leaky_slope,
            output_activation: OutputActivation::Linear,
            dropout_rate: config.dropout_rate,
            output_dim: 1,
        };
        let generator_params = neural::init_params(&generator_spec, config.seed)?;
        let critic_params = neural::init_params(&critic_spec, config.seed.wrapping_add(1))?;
        let generator_adam = AdamState::new(&generator_spec, config.generator_adam.to_adam_config());
        let critic_adam = AdamState::new(&critic_spec, config.critic_adam.to_adam_config());
        Ok(GanTrainer {
            scaled_features,
            labels: dataset.labels.clone(),
            feature_names: dataset.feature_names.clone(),
            class_names: dataset.class_names.clone(),
            scaler,
            generator_spec,
            critic_spec,
            generator_params,
            critic_params,
            generator_adam,
            critic_adam,
            next_epoch: 0,
            critic_step_count: 0,
            generator_step_count: 0,
            log: TrainLog::default(),
            config,
        })
    }

    pub fn next_epoch(&self) -> usize {
        self.next_epoch
    }

    pub fn is_complete(&self) -> bool {
        self.next_epoch >= self.config.epochs
    }

    pub fn checkpoint(&self, dataset: &Dataset) -> GanCheckpoint {
        GanCheckpoint {
            format_version: 1,
            fingerprint: fingerprint(&self.config, dataset),
            next_epoch: self.next_epoch,
            critic_step_count: self.critic_step_count,
            generator_step_count: self.generator_step_count,
            generator_params: self.generator_params.clone(),
            critic_params: self.critic_params.clone(),
            generator_adam: self.generator_adam.clone(),
            critic_adam: self.critic_adam.clone(),
            log: self.log.clone(),
        }
    }

    /// Rebuilds a trainer from a checkpoint taken with the same config and
    /// dataset.
    pub fn resume(config: GanConfig, dataset: &Dataset, checkpoint: GanCheckpoint) -> Result<GanTrainer> {
        if checkpoint.format_version != 1 {
            return Err(Error::ModelFormat(format!(
                "unsupported checkpoint version {}",
                checkpoint.format_version
            )));
        }
        if checkpoint.fingerprint != fingerprint(&config, dataset) {
            return Err(Error::InvalidArgument(
                "checkpoint does not match the current config and dataset".into(),
            ));
        }
        let mut trainer = GanTrainer::new(config, dataset)?;
        trainer.generator_params = checkpoint.generator_params;
        trainer.critic_params = checkpoint.critic_params;
        trainer.generator_adam = checkpoint.generator_adam;
        trainer.critic_adam = checkpoint.critic_adam;
        trainer.next_epoch = checkpoint.next_epoch;
        trainer.critic_step_count = checkpoint.critic_step_count;
        trainer.generator_step_count = checkpoint.generator_step_count;
        trainer.log = checkpoint.log;
        Ok(trainer)
    }

    fn sample_noise(&self, rows: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, self.config.latent_dim), |_| {
            StandardNormal.sample(rng)
        })
    }

    fn one_hot(&self, labels: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((labels.len(), self.class_names.len()));
        for (r, &l) in labels.iter().enumerate() {
            out[[r, l]] = 1.0;
        }
        out
    }

    fn generate(
        &self,
        labels_onehot: &Array2<f64>,
        rng: &mut ChaCha20Rng,
        mode_seed: u64,
    ) -> Result<(Array2<f64>, Array2<f64>, neural::ForwardTrace)> {
        let noise = self.sample_noise(labels_onehot.nrows(), rng);
        let generator_input =
            ndarray::concatenate(Axis(1), &[noise.view(), labels_onehot.view()])
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let (fake, trace) = neural::forward(
            &self.generator_params,
            &self.generator_spec,
            &generator_input,
            ForwardMode::Train { dropout_seed: mode_seed },
        )?;
        Ok((fake, generator_input, trace))
    }

    /// One critic update on a fixed real minibatch. Returns the logged loss.
    fn critic_update(
        &mut self,
        real_samples: &Array2<f64>,
        labels_onehot: &Array2<f64>,
        rng: &mut ChaCha20Rng,
    ) -> Result<f64> {
        let batch = real_samples.nrows();
        let d = self.feature_names.len();

        let dropout_seed: u64 = rng.random();
        let (fake_samples, _, _) = self.generate(labels_onehot, rng, dropout_seed)?;

        let real_input = ndarray::concatenate(
            Axis(1),
            &[real_samples.view(), labels_onehot.view()],
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let fake_input = ndarray::concatenate(
            Axis(1),
            &[fake_samples.view(), labels_onehot.view()],
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;

        let (real_scores, real_trace) = neural::forward(
            &self.critic_params,
            &self.critic_spec,
            &real_input,
            ForwardMode::Train { dropout_seed: rng.random() },
        )?;
        let (fake_scores, fake_trace) = neural::forward(
            &self.critic_params,
            &self.critic_spec,
            &fake_input,
            ForwardMode::Train { dropout_seed: rng.random() },
        )?;

        // dL/dscore: -1/M on real rows, +1/M on fake rows.
        let scale = 1.0 / batch as f64;
        let real_seed = Array2::from_elem((batch, 1), -scale);
        let fake_seed = Array2::from_elem((batch, 1), scale);
        let (real_grads, _) = neural::backward(
            &self.critic_params,
            &self.critic_spec,
            &real_trace,
            &real_seed,
        )?;
        let (fake_grads, _) = neural::backward(
            &self.critic_params,
            &self.critic_spec,
            &fake_trace,
            &fake_seed,
        )?;

        // Gradient penalty on interpolates, labels from the real rows;
        // dropout is bypassed inside this pass and the norm covers only the
        // feature columns.
        let interpolated = interpolate(real_samples, &fake_samples, rng)?;
        let interpolated_input = ndarray::concatenate(
            Axis(1),
            &[interpolated.view(), labels_onehot.view()],
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let (penalty, penalty_grads) = neural::penalty_param_gradient(
            &self.critic_params,
            &self.critic_spec,
            &interpolated_input,
            self.config.gradient_penalty_weight,
            d,
        )?;

        let mut grads = real_grads;
        grads.add_assign(&fake_grads);
        grads.add_assign(&penalty_grads);
        neural::adam_step(&mut self.critic_adam, &mut self.critic_params, &grads)?;

        let real_mean = real_scores.column(0).sum() * scale;
        let fake_mean = fake_scores.column(0).sum() * scale;
        Ok(-real_mean + fake_mean + penalty)
    }

    /// One generator update with freshly sampled conditioning labels.
    fn generator_update(&mut self, rng: &mut ChaCha20Rng) -> Result<f64> {
        let batch = self.config.batch_size;
        let d = self.feature_names.len();
        let condition_pool: Vec<usize> = match &self.config.condition_classes {
            Some(classes) => classes.clone(),
            None => (0..self.class_names.len()).collect(),
        };
        let labels: Vec<usize> = (0..batch)
            .map(|_| condition_pool[rng.random_range(0..condition_pool.len())])
            .collect();
        let labels_onehot = self.one_hot(&labels);

        let dropout_seed: u64 = rng.random();
        let (fake_samples, _, generator_trace) =
            self.generate(&labels_onehot, rng, dropout_seed)?;
        let critic_input = ndarray::concatenate(
            Axis(1),
            &[fake_samples.view(), labels_onehot.view()],
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let (scores, critic_trace) = neural::forward(
            &self.critic_params,
            &self.critic_spec,
            &critic_input,
            ForwardMode::Train { dropout_seed: rng.random() },
        )?;

        let scale = 1.0 / batch as f64;
        let score_seed = Array2::from_elem((batch, 1), -scale);
        let (_, critic_input_grads) = neural::backward(
            &self.critic_params,
            &self.critic_spec,
            &critic_trace,
            &score_seed,
        )?;
        // Only the feature columns flow back into the generator.
        let fake_grads = critic_input_grads.slice(ndarray::s![.., 0..d]).to_owned();
        let (generator_grads, _) = neural::backward(
            &self.generator_params,
            &self.generator_spec,
            &generator_trace,
            &fake_grads,
        )?;
        neural::adam_step(
            &mut self.generator_adam,
            &mut self.generator_params,
            &generator_grads,
        )?;
        Ok(-(scores.column(0).sum() * scale))
    }

    /// Runs one epoch: a seeded shuffle of the rows, then for each full
    /// minibatch `critic_steps` critic updates followed by one generator
    /// update.
    pub fn run_epoch(&mut self) -> Result<()> {
        let epoch = self.next_epoch;
        let started = Instant::now();
        let mut rng = derive_rng(self.config.seed, &[tags::GAN_EPOCH, epoch as u64]);
        let n = self.scaled_features.nrows();
        let batch = self.config.batch_size;
        let mut indices: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }

        let mut critic_losses = Vec::new();
        let mut generator_losses = Vec::new();
        for minibatch in 0..n / batch {
            let rows = &indices[minibatch * batch..(minibatch + 1) * batch];
            let real_samples = self.scaled_features.select(Axis(0), rows);
            let labels: Vec<usize> = rows.iter().map(|&i| self.labels[i]).collect();
            let labels_onehot = self.one_hot(&labels);

            for _ in 0..self.config.critic_steps {
                let loss = self.critic_update(&real_samples, &labels_onehot, &mut rng)?;
                self.log.steps.push(TrainLogEntry {
                    epoch,
                    step_kind: StepKind::Critic,
                    step_index: self.critic_step_count,
                    loss,
                });
                self.critic_step_count += 1;
                critic_losses.push(loss);
            }
            let loss = self.generator_update(&mut rng)?;
            self.log.steps.push(TrainLogEntry {
                epoch,
                step_kind: StepKind::Generator,
                step_index: self.generator_step_count,
                loss,
            });
            self.generator_step_count += 1;
            generator_losses.push(loss);
        }

        self.log.epochs.push(EpochStats {
            epoch,
            mean_critic_loss: critic_losses.iter().sum::<f64>()
                / critic_losses.len().max(1) as f64,
            mean_generator_loss: generator_losses.iter().sum::<f64>()
                / generator_losses.len().max(1) as f64,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        self.next_epoch += 1;
        Ok(())
    }

    pub fn run_to_completion(&mut self) -> Result<()> {
        while !self.is_complete() {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn finish(self) -> (TrainedGan, TrainLog) {
        (
            TrainedGan {
                config: self.config,
                generator_spec: self.generator_spec,
                generator_params: self.generator_params,
                critic_spec: self.critic_spec,
                critic_params: self.critic_params,
                scaler: self.scaler,
                feature_names: self.feature_names,
                class_names: self.class_names,
            },
            self.log,
        )
    }
}

/// Trains a conditional WGAN-GP on a cleaned, encoded dataset. With
/// `epochs = 0` this returns the initialized networks and an empty log.
pub fn train(config: GanConfig, dataset: &Dataset) -> Result<(TrainedGan, TrainLog)> {
    let mut trainer = GanTrainer::new(config, dataset)?;
    trainer.run_to_completion()?;
    Ok(trainer.finish())
}

/// Draws `count` synthetic rows conditioned on `class_id`, in original
/// feature units, all labeled `class_id`.
pub fn sample_synthetic(
    gan: &TrainedGan,
    class_id: usize,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    if class_id >= gan.class_count() {
        return Err(Error::UnknownClass(format!(
            "class id {class_id} out of range for {} classes",
            gan.class_count()
        )));
    }
    let mut rng = derive_rng(seed, &[tags::SAMPLE, class_id as u64]);
    let mut feature_rows = Array2::zeros((count, gan.feature_count()));
    let chunk = 512usize;
    let mut produced = 0;
    while produced < count {
        let rows = chunk.min(count - produced);
        let mut generator_input =
            Array2::zeros((rows, gan.config.latent_dim + gan.class_count()));
        for r in 0..rows {
            for c in 0..gan.config.latent_dim {
                generator_input[[r, c]] = StandardNormal.sample(&mut rng);
            }
            generator_input[[r, gan.config.latent_dim + class_id]] = 1.0;
        }
        let (generated, _) = neural::forward(
            &gan.generator_params,
            &gan.generator_spec,
            &generator_input,
            ForwardMode::Eval,
        )?;
        let restored = gan.scaler.inverse_transform_features(&generated)?;
        feature_rows
            .slice_mut(ndarray::s![produced..produced + rows, ..])
            .assign(&restored);
        produced += rows;
    }
    Dataset::new(
        feature_rows,
        vec![class_id; count],
        gan.feature_names.clone(),
        gan.class_names.clone(),
    )
}

/// Per-class synthetic sample counts, keyed by class name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub synthetic_counts: BTreeMap<String, usize>,
}

impl AugmentationPlan {
    pub fn uniform(class_names: &[String], count: usize) -> AugmentationPlan {
        AugmentationPlan {
            synthetic_counts: class_names
                .iter()
                .map(|name| (name.clone(), count))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.synthetic_counts.values().all(|&c| c == 0)
    }
}

/// Appends GAN-synthesized rows to the training rows per the plan: original
/// rows first and unmodified, synthetic rows after, classes in id order.
/// Synthesis seeds derive from the GAN's training seed and the class id.
pub fn build_augmented_dataset(
    train: &Dataset,
    plan: &AugmentationPlan,
    gan: &TrainedGan,
) -> Result<Dataset> {
    let mut augmented = train.clone();
    let mut per_class: Vec<(usize, usize)> = Vec::new();
    for (name, &count) in &plan.synthetic_counts {
        let class_id = train
            .class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.clone()))?;
        per_class.push((class_id, count));
    }
    per_class.sort_unstable();
    for (class_id, count) in per_class {
        if count == 0 {
            continue;
        }
        let seed = gan
            .config
            .seed
            .wrapping_add(0x5eed_0000)
            .wrapping_add(class_id as u64);
        let synthetic = sample_synthetic(gan, class_id, count, seed)?;
        augmented = augmented.append(&synthetic)?;
    }
    Ok(augmented)
}

#[derive(Serialize, Deserialize)]
struct GanEnvelope {
    format_version: u32,
    config: GanConfig,
    scaler: ScalerModel,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

/// Writes a trained GAN: a one-line JSON envelope followed by the generator
/// and critic parameter sections in the shared parameter format.
pub fn write_gan<W: Write>(gan: &TrainedGan, writer: &mut W) -> Result<()> {
    let envelope = GanEnvelope {
        format_version: 1,
        config: gan.config.clone(),
        scaler: gan.scaler.clone(),
        feature_names: gan.feature_names.clone(),
        class_names: gan.class_names.clone(),
    };
    serde_json::to_writer(&mut *writer, &envelope)?;
    writer.write_all(b"\n")?;
    neural::write_params(writer, &gan.generator_spec, &gan.generator_params, None)?;
    neural::write_params(writer, &gan.critic_spec, &gan.critic_params, None)?;
    Ok(())
}

/// Reads a trained GAN written by [`write_gan`].
pub fn read_gan<R: BufRead>(reader: &mut R) -> Result<TrainedGan> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let envelope: GanEnvelope = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::ModelFormat(format!("bad gan envelope: {e}")))?;
    if envelope.format_version != 1 {
        return Err(Error::ModelFormat(format!(
            "unsupported gan format version {}",
            envelope.format_version
        )));
    }
    let (generator_spec, generator_params, _) = neural::read_params(reader)?;
    let (critic_spec, critic_params, _) = neural::read_params(reader)?;
    Ok(TrainedGan {
        config: envelope.config,
        generator_spec,
        generator_params,
        critic_spec,
        critic_params,
        scaler: envelope.scaler,
        feature_names: envelope.feature_names,
        class_names: envelope.class_names,
    })
}
