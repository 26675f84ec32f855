//! Imbalance-aware intrusion detection on labeled tabular traffic.
//!
//! The pipeline has two halves. A conditional Wasserstein GAN with gradient
//! penalty learns the training distribution and synthesizes extra rows for
//! minority attack classes, producing an augmented training set. A two-phase
//! detector then classifies traffic: phase 1 runs a configurable classifier
//! over all classes and keeps its prediction whenever it names a major attack;
//! everything else is re-classified by a phase-2 random forest trained only on
//! normal plus minority rows, downsampled to bound the imbalance.
//!
//! Modules follow the pipeline stages:
//!
//! * [`tabular`] — CSV loading, cleaning, label encoding, scaling, splitting
//! * [`featsel`] — mutual-information feature ranking and top-k selection
//! * [`neural`] — dense-network engine with exact gradients (including the
//!   second-order pass needed by the gradient penalty) and Adam
//! * [`wcgan`] — conditional WGAN-GP training, synthesis, augmentation
//! * [`classifiers`] — a uniform classifier contract with five built-ins
//! * [`dualnet`] — the two-phase detector and combination search
//! * [`metrics`] — confusion matrices, accuracy/precision/recall/F1/FAR
//! * [`presets`] — per-dataset hyperparameter and augmentation presets
//!
//! Every operation that draws randomness takes an explicit seed; identical
//! inputs produce bit-identical outputs.

use std::path::PathBuf;

use thiserror::Error;

pub mod classifiers;
pub mod dualnet;
pub mod featsel;
pub mod metrics;
pub mod neural;
pub mod presets;
pub mod rng;
pub mod tabular;
pub mod wcgan;

pub use tabular::Dataset;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing input file: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("unknown label column '{column}'; available columns: {available:?}")]
    UnknownLabelColumn {
        column: String,
        available: Vec<String>,
    },

    #[error("data row {row}, column '{column}': cannot parse {value:?} as a number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column '{column}' has no finite values; mean imputation is undefined")]
    EmptyColumnImpute { column: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("inverse transform is unsupported for l2 normalization; row norms are discarded")]
    UnsupportedInverse,

    #[error("dataset has {rows} rows but the batch size is {batch}; use a smaller batch size")]
    BatchTooLarge { rows: usize, batch: usize },

    #[error("unknown class: {0}")]
    UnknownClass(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("no built-in implementation for classifier kind '{0}'; register a plugin")]
    MissingPlugin(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
