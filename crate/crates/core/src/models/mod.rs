//! The three predictive heads: binary MLP classifier, MLP regressor, and
//! SVM classifier, plus training and artifact serialization.
//!
//! Training is seeded and single-threaded, so (data, config, seed) always
//! reproduces a bitwise-identical artifact. Learned parameters are
//! quantized to f32 when the artifact is built; inference promotes them to
//! f64, which makes `deserialize(serialize(a))` predict identically to `a`.

mod artifact;
pub mod mlp;
pub mod svm;

pub use artifact::{deserialize_artifact, serialize_artifact, ArtifactError};
pub use mlp::{
    gradient_check, predict_alert, predict_score, train_binary_classifier, train_regressor,
    MlpNet,
};
pub use svm::{svm_predict, train_svm};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{BackendDescriptor, EmbeddingKind, PoolingMethod};
use crate::dataset::DEFAULT_ALERT_THRESHOLD;

/// Which model an artifact holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MlpBinary,
    MlpRegressor,
    Svm,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::MlpBinary => write!(f, "mlp_binary"),
            ModelKind::MlpRegressor => write!(f, "mlp_regressor"),
            ModelKind::Svm => write!(f, "svm"),
        }
    }
}

/// Output head of the fully connected network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpHead {
    BinaryClassifier,
    Regressor,
}

/// Fully connected network hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub head: MlpHead,
}

impl MlpConfig {
    /// Defaults for the binary alert classifier head.
    pub fn binary(input_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden_dims: vec![256, 64],
            dropout_rate: 0.3,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 16,
            seed,
            head: MlpHead::BinaryClassifier,
        }
    }

    /// Defaults for the continuous danger-score regressor head.
    pub fn regressor(input_dim: usize, seed: u64) -> Self {
        MlpConfig {
            head: MlpHead::Regressor,
            ..MlpConfig::binary(input_dim, seed)
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.head {
            MlpHead::BinaryClassifier => 2,
            MlpHead::Regressor => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::ConfigInvalid("input_dim must be positive".into()));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(ModelError::ConfigInvalid(
                "hidden layer widths must be positive".into(),
            ));
        }
        if !(self.dropout_rate >= 0.0 && self.dropout_rate < 1.0) {
            return Err(ModelError::ConfigInvalid(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::ConfigInvalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ModelError::ConfigInvalid("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::ConfigInvalid(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// SVM kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmKernel {
    Rbf,
    Linear,
}

/// RBF length scale: a fixed value, or derived from the data as
/// `1 / (dim * feature variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWidth {
    Auto,
    Fixed(f64),
}

impl Serialize for KernelWidth {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            KernelWidth::Auto => serializer.serialize_str("auto"),
            KernelWidth::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for KernelWidth {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) if s == "auto" => Ok(KernelWidth::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "kernel_width must be \"auto\" or a positive number, got \"{s}\""
            ))),
            Raw::Number(v) => Ok(KernelWidth::Fixed(v)),
        }
    }
}

/// SVM hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: SvmKernel,
    pub regularization_c: f64,
    pub kernel_width: KernelWidth,
    pub seed: u64,
}

impl SvmConfig {
    pub fn rbf(seed: u64) -> Self {
        SvmConfig {
            kernel: SvmKernel::Rbf,
            regularization_c: 1.0,
            kernel_width: KernelWidth::Auto,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.regularization_c.is_finite() && self.regularization_c > 0.0) {
            return Err(ModelError::ConfigInvalid(format!(
                "regularization_c must be positive, got {}",
                self.regularization_c
            )));
        }
        if let KernelWidth::Fixed(w) = self.kernel_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(ModelError::ConfigInvalid(format!(
                    "kernel_width must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Snapshot of the config that trained an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfigSnapshot {
    Mlp(MlpConfig),
    Svm(SvmConfig),
}

/// Which embedding backends produced the training features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendBindings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<BackendDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<BackendDescriptor>,
}

/// One dense layer's learned parameters (weights row-major `[out][in]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub head: MlpHead,
    pub layers: Vec<DenseParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub dim: usize,
    /// `n_sv * dim`, row-major.
    pub support_vectors: Vec<f32>,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f32>,
    pub bias: f32,
    pub kernel: SvmKernel,
    /// Resolved RBF length scale (unused for the linear kernel).
    pub kernel_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Mlp(MlpParams),
    Svm(SvmParams),
}

pub const ARTIFACT_FORMAT_VERSION: u16 = 1;

/// A trained model with everything needed to reproduce its predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModelArtifact {
    pub model_kind: ModelKind,
    pub config: ModelConfigSnapshot,
    pub backends: BackendBindings,
    pub pooling: PoolingMethod,
    pub threshold: f64,
    pub format_version: u16,
    pub params: ModelParams,
}

impl TrainedModelArtifact {
    /// Input dimension the artifact's predictors expect.
    pub fn input_dim(&self) -> usize {
        match &self.params {
            ModelParams::Mlp(p) => p.layers.first().map(|l| l.in_dim).unwrap_or(0),
            ModelParams::Svm(p) => p.dim,
        }
    }

    /// Stamps provenance gathered by the pipeline (backends, pooling,
    /// alert threshold) onto a freshly trained artifact.
    pub fn with_provenance(
        mut self,
        backends: BackendBindings,
        pooling: PoolingMethod,
        threshold: f64,
    ) -> Self {
        self.backends = backends;
        self.pooling = pooling;
        self.threshold = threshold;
        self
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
    pub final_train_loss: f64,
    pub wall_clock_secs: f64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    ConfigInvalid(String),
    #[error("feature dim {actual} does not match expected {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("expected a {expected} artifact, got {actual}")]
    KindMismatch {
        expected: ModelKind,
        actual: ModelKind,
    },
    #[error("expected {expected:?} features, got {actual:?}")]
    FeatureKindMismatch {
        expected: EmbeddingKind,
        actual: EmbeddingKind,
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("features and targets have different lengths ({features} vs {targets})")]
    LengthMismatch { features: usize, targets: usize },
    #[error("training set contains a single class; both classes are required")]
    SingleClass,
    #[error("target {value} at index {index} outside [0, 10]")]
    TargetOutOfRange { index: usize, value: f64 },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("SVM did not converge within {sweeps} optimization sweeps")]
    NonConvergence { sweeps: usize },
}

/// Builds an artifact shell with default provenance; training functions
/// fill in the params.
pub(crate) fn artifact_from_params(
    model_kind: ModelKind,
    config: ModelConfigSnapshot,
    params: ModelParams,
) -> TrainedModelArtifact {
    TrainedModelArtifact {
        model_kind,
        config,
        backends: BackendBindings::default(),
        pooling: PoolingMethod::Mean,
        threshold: DEFAULT_ALERT_THRESHOLD,
        format_version: ARTIFACT_FORMAT_VERSION,
        params,
    }
}
