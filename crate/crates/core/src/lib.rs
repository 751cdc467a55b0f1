//! Core library for video danger assessment pipelines.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`dataset`]: manifest ingestion, evaluator-rating aggregation, alert
//!   labels, and seeded train/test splits.
//! - [`frames`]: deterministic frame-index sampling inside annotated temporal
//!   segments, plus the [`frames::FrameSource`] decoder abstraction.
//! - [`embedding`]: visual/text embedding backends, mean pooling,
//!   concatenation fusion, and the on-disk embedding cache format.
//! - [`models`]: the three predictive heads (binary MLP classifier, MLP
//!   regressor, SVM) with seeded training and artifact serialization.
//! - [`eval`]: classification/regression metrics, seeded k-fold assignment,
//!   and cross-validation reports.
//!
//! Everything is deterministic: given the same inputs and seeds, every
//! function in this crate produces bit-identical outputs.

pub mod dataset;
pub mod embedding;
pub mod eval;
pub mod frames;
pub mod hash;
pub mod models;

pub use dataset::{
    AlertLabel, DangerRating, DatasetSplit, RatingAggregation, VideoManifestEntry,
    DEFAULT_ALERT_THRESHOLD,
};
pub use embedding::{
    BackendDescriptor, CachedEmbedding, EmbeddingBackend, EmbeddingKind, EmbeddingStack,
    EmbeddingVector, Modality, MockBackend, PoolingMethod,
};
pub use eval::{ConfusionMatrix, CrossValidationReport, FoldAssignment, MetricsBundle};
pub use frames::{FramePlan, FrameSource, RawImage, TemporalSegment};
pub use models::{
    MlpConfig, MlpHead, ModelKind, SvmConfig, SvmKernel, TrainedModelArtifact, TrainingLog,
};
