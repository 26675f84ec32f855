//! Pipeline configuration: a JSON file, optionally seeded from a dataset
//! preset, with unknown keys rejected. Resolution produces a fully concrete
//! snapshot that goes into the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hybridguard::classifiers::{
    ClassifierSpec, ForestConfig, GaussianNbConfig, LogisticRegressionConfig, MlpClassifierConfig,
    TreeConfig,
};
use hybridguard::dualnet::PartitionPolicy;
use hybridguard::presets;
use hybridguard::tabular::{CleanPolicy, ScalerMethod, SplitOptions};
use hybridguard::wcgan::{AugmentationPlan, GanConfig, NetworkAdam};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub policy: CleanPolicy,
    pub outlier_zscore: Option<f64>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            policy: CleanPolicy::Drop,
            outlier_zscore: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_parts: u32,
    pub test_parts: u32,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_parts: 6,
            test_parts: 1,
            seed: 42,
            stratified: false,
        }
    }
}

/// Partial GAN settings; unset fields fall back to the preset or defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanOverrides {
    pub latent_dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub critic_steps: Option<usize>,
    pub gradient_penalty_weight: Option<f64>,
    pub epochs: Option<usize>,
    pub generator_hidden: Option<Vec<usize>>,
    pub critic_hidden: Option<Vec<usize>>,
    pub dropout_rate: Option<f64>,
    pub leaky_slope: Option<f64>,
    pub generator_adam: Option<NetworkAdam>,
    pub critic_adam: Option<NetworkAdam>,
    pub seed: Option<u64>,
}

impl GanOverrides {
    fn apply(&self, mut base: GanConfig) -> GanConfig {
        macro_rules! patch {
            ($field:ident) => {
                if let Some(value) = &self.$field {
                    base.$field = value.clone();
                }
            };
        }
        patch!(latent_dim);
        patch!(batch_size);
        patch!(critic_steps);
        patch!(gradient_penalty_weight);
        patch!(epochs);
        patch!(generator_hidden);
        patch!(critic_hidden);
        patch!(dropout_rate);
        patch!(leaky_slope);
        patch!(generator_adam);
        patch!(critic_adam);
        patch!(seed);
        base
    }
}

/// Per-kind phase-1 hyperparameter overrides for the combination sweep.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase1Overrides {
    pub logistic_regression: Option<LogisticRegressionConfig>,
    pub gaussian_nb: Option<GaussianNbConfig>,
    pub decision_tree: Option<TreeConfig>,
    pub mlp: Option<MlpClassifierConfig>,
}

/// Which training file the detector uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSource {
    Augmented,
    Original,
}

/// The on-disk configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub input_csv: Option<PathBuf>,
    pub label_column: Option<String>,
    pub clean: CleanConfig,
    pub scaling: Vec<ScalerMethod>,
    pub split: SplitConfig,
    pub gan: GanOverrides,
    pub augmentation: Option<BTreeMap<String, usize>>,
    pub partition: Option<PartitionPolicy>,
    pub k_features: Option<usize>,
    pub combinations: Vec<String>,
    pub forest: Option<ForestConfig>,
    pub phase1: Phase1Overrides,
    pub trust_phase1_minor: bool,
    pub train_on: TrainSource,
    pub checkpoint_interval: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: 1,
            preset: None,
            input_csv: None,
            label_column: None,
            clean: CleanConfig::default(),
            scaling: vec![ScalerMethod::Standardize, ScalerMethod::L2Normalize],
            split: SplitConfig::default(),
            gan: GanOverrides::default(),
            augmentation: None,
            partition: None,
            k_features: None,
            combinations: vec!["M1".into(), "M2".into(), "M3".into(), "M9".into()],
            forest: None,
            phase1: Phase1Overrides::default(),
            trust_phase1_minor: false,
            train_on: TrainSource::Augmented,
            checkpoint_interval: 50,
            out_dir: None,
        }
    }
}

/// Fully concrete configuration after preset and CLI-flag resolution; the
/// manifest stores this snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub input_csv: PathBuf,
    pub label_column: String,
    pub clean: CleanConfig,
    pub scaling: Vec<ScalerMethod>,
    pub split: SplitConfig,
    pub gan: GanConfig,
    pub augmentation: AugmentationPlan,
    pub partition: PartitionPolicy,
    pub k_features: usize,
    pub combinations: Vec<String>,
    pub forest: ForestConfig,
    pub phase1: Phase1Overrides,
    pub trust_phase1_minor: bool,
    pub train_on: TrainSource,
    pub checkpoint_interval: usize,
    pub out_dir: PathBuf,
}

/// Overrides taken from global CLI flags.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Built-in combination names and their phase-1 classifier kinds. The
/// remaining slots (M4-M8, M10) exist behind the library's plugin interface
/// but have no built-in, so configuring them here is rejected.
pub const BUILTIN_COMBINATIONS: [&str; 4] = ["M1", "M2", "M3", "M9"];

pub fn combination_spec(
    name: &str,
    overrides: &Phase1Overrides,
) -> CliResult<hybridguard::dualnet::CombinationSpec> {
    let phase1 = match name {
        "M1" => ClassifierSpec::LogisticRegression(
            overrides.logistic_regression.clone().unwrap_or_default(),
        ),
        "M2" => ClassifierSpec::GaussianNb(overrides.gaussian_nb.clone().unwrap_or_default()),
        "M3" => ClassifierSpec::DecisionTree(overrides.decision_tree.clone().unwrap_or_default()),
        "M9" => ClassifierSpec::Mlp(overrides.mlp.clone().unwrap_or_default()),
        "M4" | "M5" | "M6" | "M7" | "M8" | "M10" => {
            return Err(CliError::Config(format!(
                "combination {name} needs an external classifier plugin; built-ins are {}",
                BUILTIN_COMBINATIONS.join(", ")
            )));
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown combination '{other}'; built-ins are {}",
                BUILTIN_COMBINATIONS.join(", ")
            )));
        }
    };
    Ok(hybridguard::dualnet::CombinationSpec {
        name: name.to_string(),
        phase1,
    })
}

pub fn load_config(path: &Path) -> CliResult<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
}

impl PipelineConfig {
    pub fn resolve(self, cli: &CliOverrides) -> CliResult<ResolvedConfig> {
        let preset = match &self.preset {
            Some(name) => Some(presets::by_name(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown preset '{name}'; available: unsw_nb15, cic_ids2017, iotid20"
                ))
            })?),
            None => None,
        };

        let input_csv = self
            .input_csv
            .ok_or_else(|| CliError::Config("config is missing 'input_csv'".into()))?;
        let label_column = self
            .label_column
            .or_else(|| preset.as_ref().map(|p| p.label_column.to_string()))
            .ok_or_else(|| {
                CliError::Config("config is missing 'label_column' and no preset supplies one".into())
            })?;
        let mut split = self.split;
        if split.train_parts == 0 || split.test_parts == 0 {
            return Err(CliError::Config("split parts must be positive".into()));
        }

        let gan_base = preset
            .as_ref()
            .map(|p| p.gan.clone())
            .unwrap_or_default();
        let mut gan = self.gan.apply(gan_base);

        if let Some(seed) = cli.seed {
            split.seed = seed;
            gan.seed = seed;
        }

        let augmentation = match self.augmentation {
            Some(plan) => AugmentationPlan {
                synthetic_counts: plan,
            },
            None => preset
                .as_ref()
                .map(|p| p.augmentation.clone())
                .unwrap_or_default(),
        };
        let partition = self
            .partition
            .or_else(|| preset.as_ref().map(|p| p.partition.clone()))
            .ok_or_else(|| {
                CliError::Config("config is missing 'partition' and no preset supplies one".into())
            })?;
        let k_features = self
            .k_features
            .or_else(|| preset.as_ref().map(|p| p.k_features))
            .unwrap_or(30);
        if k_features == 0 {
            return Err(CliError::Config("k_features must be at least 1".into()));
        }
        if self.combinations.is_empty() {
            return Err(CliError::Config("no combinations configured".into()));
        }
        for name in &self.combinations {
            combination_spec(name, &self.phase1)?;
        }
        if self.checkpoint_interval == 0 {
            return Err(CliError::Config("checkpoint_interval must be at least 1".into()));
        }
        let out_dir = cli
            .out_dir
            .clone()
            .or(self.out_dir)
            .ok_or_else(|| CliError::Config("no output directory; set 'out_dir' or --out-dir".into()))?;

        gan.validate().map_err(CliError::from)?;

        Ok(ResolvedConfig {
            schema_version: self.schema_version,
            preset: self.preset,
            input_csv,
            label_column,
            clean: self.clean,
            scaling: self.scaling,
            split,
            gan,
            augmentation,
            partition,
            k_features,
            combinations: self.combinations,
            forest: self.forest.unwrap_or_default(),
            phase1: self.phase1,
            trust_phase1_minor: self.trust_phase1_minor,
            train_on: self.train_on,
            checkpoint_interval: self.checkpoint_interval,
            out_dir,
        })
    }
}

impl ResolvedConfig {
    pub fn split_options(&self) -> SplitOptions {
        SplitOptions {
            train_parts: self.split.train_parts,
            test_parts: self.split.test_parts,
            seed: self.split.seed,
            stratified: self.split.stratified,
        }
    }

    pub fn dualnet_config(&self) -> hybridguard::dualnet::DualNetConfig {
        hybridguard::dualnet::DualNetConfig {
            k_features: self.k_features,
            binning: Default::default(),
            trust_phase1_minor: self.trust_phase1_minor,
            mi_after_downsample: false,
            seed: self.split.seed,
        }
    }
}
