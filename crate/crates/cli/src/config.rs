//! Experiment configuration: one TOML document fully describing a run.
//!
//! ```toml
//! seed = 42
//! manifest_path = "data/demo/manifest.jsonl"
//! output_dir = "runs/demo"
//! threshold = 7.0
//! rating_aggregation = "mean"
//! pooling = "mean"
//!
//! [frames]
//! count = 50
//!
//! [split]            # exactly one of [split] / [cv]
//! test_fraction = 0.1
//! stratified = true
//!
//! [backends.visual]
//! kind = "mock"
//! dim = 32
//! salt = 1
//!
//! [backends.text]
//! kind = "mock"
//! dim = 32
//! salt = 2
//!
//! [model]
//! kind = "mlp"
//! head = "binary_classifier"
//! ```
//!
//! Command-line flags may override `seed`, `output_dir`, and the worker
//! count; every override is recorded in the run record.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use vidrisk_core::dataset::RatingAggregation;
use vidrisk_core::embedding::PoolingMethod;
use vidrisk_core::hash::sha256_hex;
use vidrisk_core::models::{KernelWidth, MlpConfig, MlpHead, SvmConfig, SvmKernel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_aggregation")]
    pub rating_aggregation: RatingAggregation,
    #[serde(default = "default_pooling")]
    pub pooling: PoolingMethod,
    #[serde(default)]
    pub frames: FramesSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvSection>,
    pub backends: BackendsSection,
    pub model: ModelSection,
}

fn default_threshold() -> f64 {
    7.0
}

fn default_aggregation() -> RatingAggregation {
    RatingAggregation::Mean
}

fn default_pooling() -> PoolingMethod {
    PoolingMethod::Mean
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesSection {
    #[serde(default = "default_frame_count")]
    pub count: usize,
}

impl Default for FramesSection {
    fn default() -> Self {
        FramesSection {
            count: default_frame_count(),
        }
    }
}

fn default_frame_count() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_stratified")]
    pub stratified: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            test_fraction: default_test_fraction(),
            stratified: default_stratified(),
        }
    }
}

fn default_test_fraction() -> f64 {
    0.1
}

fn default_stratified() -> bool {
    true
}

/// Whether cross-validation folds span the full dataset or only the
/// training side of a held-out split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvScope {
    #[default]
    Full,
    Train,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub scope: CvScope,
    /// Held-out fraction used only when `scope = "train"`.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsSection {
    pub visual: BackendSpec,
    pub text: BackendSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Deterministic hash-based backend for tests and dry runs.
    Mock {
        dim: usize,
        #[serde(default)]
        salt: u64,
        #[serde(default)]
        class_signal: f64,
    },
    /// Out-of-process adapter: one process per item, raw input bytes on
    /// stdin, exactly `dim` little-endian f32 values on stdout.
    /// Credentials reach the child through inherited environment
    /// variables, never through this file.
    Command {
        dim: usize,
        command: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        version: Option<String>,
        #[serde(default)]
        serial: bool,
    },
}

impl BackendSpec {
    pub fn dim(&self) -> usize {
        match self {
            BackendSpec::Mock { dim, .. } | BackendSpec::Command { dim, .. } => *dim,
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, BackendSpec::Mock { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    Mlp {
        #[serde(default = "default_head")]
        head: MlpHead,
        #[serde(default = "default_hidden_dims")]
        hidden_dims: Vec<usize>,
        #[serde(default = "default_dropout")]
        dropout_rate: f64,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
    Svm {
        #[serde(default = "default_kernel")]
        kernel: SvmKernel,
        #[serde(default = "default_c")]
        regularization_c: f64,
        #[serde(default = "default_kernel_width")]
        kernel_width: KernelWidth,
    },
}

fn default_head() -> MlpHead {
    MlpHead::BinaryClassifier
}

fn default_hidden_dims() -> Vec<usize> {
    vec![256, 64]
}

fn default_dropout() -> f64 {
    0.3
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_epochs() -> usize {
    100
}

fn default_batch_size() -> usize {
    16
}

fn default_kernel() -> SvmKernel {
    SvmKernel::Rbf
}

fn default_c() -> f64 {
    1.0
}

fn default_kernel_width() -> KernelWidth {
    KernelWidth::Auto
}

impl ModelSection {
    pub fn is_svm(&self) -> bool {
        matches!(self, ModelSection::Svm { .. })
    }

    pub fn mlp_head(&self) -> Option<MlpHead> {
        match self {
            ModelSection::Mlp { head, .. } => Some(*head),
            ModelSection::Svm { .. } => None,
        }
    }

    pub fn to_mlp_config(&self, input_dim: usize, seed: u64) -> Option<MlpConfig> {
        match self {
            ModelSection::Mlp {
                head,
                hidden_dims,
                dropout_rate,
                learning_rate,
                epochs,
                batch_size,
            } => Some(MlpConfig {
                input_dim,
                hidden_dims: hidden_dims.clone(),
                dropout_rate: *dropout_rate,
                learning_rate: *learning_rate,
                epochs: *epochs,
                batch_size: *batch_size,
                seed,
                head: *head,
            }),
            ModelSection::Svm { .. } => None,
        }
    }

    pub fn to_svm_config(&self, seed: u64) -> Option<SvmConfig> {
        match self {
            ModelSection::Svm {
                kernel,
                regularization_c,
                kernel_width,
            } => Some(SvmConfig {
                kernel: *kernel,
                regularization_c: *regularization_c,
                kernel_width: *kernel_width,
                seed,
            }),
            ModelSection::Mlp { .. } => None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(config)
    }

    /// Hash of the resolved config (after flag overrides), used to key run
    /// records.
    pub fn effective_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        sha256_hex(&bytes)
    }

    /// Fused feature width for MLP models.
    pub fn fused_dim(&self) -> usize {
        self.backends.visual.dim() + self.backends.text.dim()
    }

    /// Checks every config invariant, returning one message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.threshold.is_finite() && (0.0..=10.0).contains(&self.threshold)) {
            out.push("threshold outside rating scale [0,10]".to_string());
        }
        match (&self.split, &self.cv) {
            (Some(_), Some(_)) => {
                out.push("both split and cv are present; exactly one is required".to_string())
            }
            (None, None) => {
                out.push("neither split nor cv is present; exactly one is required".to_string())
            }
            _ => {}
        }
        if self.frames.count == 0 {
            out.push("frames.count must be at least 1".to_string());
        }
        if let Some(split) = &self.split {
            if !(split.test_fraction.is_finite()
                && split.test_fraction > 0.0
                && split.test_fraction < 1.0)
            {
                out.push(format!(
                    "split.test_fraction must be in (0,1), got {}",
                    split.test_fraction
                ));
            }
        }
        if let Some(cv) = &self.cv {
            if cv.k < 2 {
                out.push(format!("cv.k must be at least 2, got {}", cv.k));
            }
            if cv.scope == CvScope::Train
                && !(cv.test_fraction.is_finite()
                    && cv.test_fraction > 0.0
                    && cv.test_fraction < 1.0)
            {
                out.push(format!(
                    "cv.test_fraction must be in (0,1), got {}",
                    cv.test_fraction
                ));
            }
        }
        for (name, spec) in [("visual", &self.backends.visual), ("text", &self.backends.text)] {
            if spec.dim() == 0 {
                out.push(format!("backends.{name}.dim must be at least 1"));
            }
            if let BackendSpec::Command { command, .. } = spec {
                if command.trim().is_empty() {
                    out.push(format!("backends.{name}.command must not be empty"));
                }
            }
        }
        match &self.model {
            ModelSection::Mlp {
                hidden_dims,
                dropout_rate,
                learning_rate,
                epochs,
                batch_size,
                ..
            } => {
                if hidden_dims.iter().any(|&d| d == 0) {
                    out.push("model.hidden_dims entries must be positive".to_string());
                }
                if !(*dropout_rate >= 0.0 && *dropout_rate < 1.0) {
                    out.push(format!(
                        "model.dropout_rate must be in [0,1), got {dropout_rate}"
                    ));
                }
                if !(learning_rate.is_finite() && *learning_rate > 0.0) {
                    out.push(format!(
                        "model.learning_rate must be positive, got {learning_rate}"
                    ));
                }
                if *epochs == 0 {
                    out.push("model.epochs must be at least 1".to_string());
                }
                if *batch_size == 0 {
                    out.push("model.batch_size must be at least 1".to_string());
                }
            }
            ModelSection::Svm {
                regularization_c,
                kernel_width,
                ..
            } => {
                if !(regularization_c.is_finite() && *regularization_c > 0.0) {
                    out.push(format!(
                        "model.regularization_c must be positive, got {regularization_c}"
                    ));
                }
                if let KernelWidth::Fixed(w) = kernel_width {
                    if !(w.is_finite() && *w > 0.0) {
                        out.push(format!("model.kernel_width must be positive, got {w}"));
                    }
                }
                if self.model.is_svm() && self.split.is_none() && self.cv.is_none() {
                    // already reported by the split/cv check
                }
            }
        }
        if !self.manifest_path.exists() {
            out.push(format!(
                "manifest_path does not exist: {}",
                self.manifest_path.display()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml(dir: &Path) -> String {
        let manifest = dir.join("manifest.jsonl");
        std::fs::write(&manifest, "").unwrap();
        format!(
            r#"
seed = 7
manifest_path = "{}"
output_dir = "{}"

[split]

[backends.visual]
kind = "mock"
dim = 16

[backends.text]
kind = "mock"
dim = 8

[model]
kind = "mlp"
"#,
            manifest.display(),
            dir.join("out").display()
        )
    }

    #[test]
    fn defaults_fill_in() {
        let dir = tempfile::tempdir().unwrap();
        let config: ExperimentConfig = toml::from_str(&minimal_toml(dir.path())).unwrap();
        assert_eq!(config.frames.count, 50);
        assert_eq!(config.threshold, 7.0);
        assert_eq!(config.split.as_ref().unwrap().test_fraction, 0.1);
        assert!(config.split.as_ref().unwrap().stratified);
        assert_eq!(config.fused_dim(), 24);
        assert!(config.violations().is_empty(), "{:?}", config.violations());
        match &config.model {
            ModelSection::Mlp {
                hidden_dims,
                dropout_rate,
                epochs,
                batch_size,
                learning_rate,
                head,
            } => {
                assert_eq!(hidden_dims, &vec![256, 64]);
                assert_eq!(*dropout_rate, 0.3);
                assert_eq!(*epochs, 100);
                assert_eq!(*batch_size, 16);
                assert_eq!(*learning_rate, 1e-3);
                assert_eq!(*head, MlpHead::BinaryClassifier);
            }
            _ => panic!("expected mlp model"),
        }
    }

    #[test]
    fn threshold_violation_message() {
        let dir = tempfile::tempdir().unwrap();
        let mut config: ExperimentConfig = toml::from_str(&minimal_toml(dir.path())).unwrap();
        config.threshold = 11.0;
        let violations = config.violations();
        assert!(violations
            .iter()
            .any(|v| v == "threshold outside rating scale [0,10]"));
    }

    #[test]
    fn split_and_cv_are_mutually_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let mut config: ExperimentConfig = toml::from_str(&minimal_toml(dir.path())).unwrap();
        config.cv = Some(CvSection {
            k: 10,
            scope: CvScope::Full,
            test_fraction: 0.1,
        });
        let violations = config.violations();
        assert!(violations.iter().any(|v| v.contains("both split and cv")));

        config.split = None;
        config.cv = None;
        let violations = config.violations();
        assert!(violations.iter().any(|v| v.contains("neither split nor cv")));
    }

    #[test]
    fn svm_kernel_width_accepts_auto_and_number() {
        let toml_auto: ModelSection = toml::from_str(
            r#"
kind = "svm"
kernel_width = "auto"
"#,
        )
        .unwrap();
        assert_eq!(
            toml_auto.to_svm_config(0).unwrap().kernel_width,
            KernelWidth::Auto
        );
        let toml_num: ModelSection = toml::from_str(
            r#"
kind = "svm"
kernel_width = 0.5
"#,
        )
        .unwrap();
        assert_eq!(
            toml_num.to_svm_config(0).unwrap().kernel_width,
            KernelWidth::Fixed(0.5)
        );
    }

    #[test]
    fn effective_hash_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let a: ExperimentConfig = toml::from_str(&minimal_toml(dir.path())).unwrap();
        let mut b = a.clone();
        assert_eq!(a.effective_hash(), b.effective_hash());
        b.seed = 8;
        assert_ne!(a.effective_hash(), b.effective_hash());
    }
}
