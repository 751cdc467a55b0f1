//! Embedding extraction, pooling, fusion, and the on-disk cache.
//!
//! Backends live behind [`EmbeddingBackend`] so the pipeline is agnostic to
//! the encoder family: real encoders plug in as adapters (see the CLI's
//! command backend), while [`MockBackend`] provides a deterministic stand-in
//! for tests and synthetic experiments.
//!
//! All pooling and fusion arithmetic accumulates in f64 and stores f32, so
//! results are reproducible bit-for-bit across runs and platforms.

mod cache;
mod mock;

pub use cache::{
    cache_read, cache_write, read_sidecar, sidecar_path, write_sidecar, CacheError,
    CachedEmbedding, SidecarMeta,
};
pub use mock::MockBackend;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::RawImage;

/// Input modality a backend accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Visual => write!(f, "visual"),
            Modality::Text => write!(f, "text"),
        }
    }
}

/// Whether a backend handle may be called from multiple threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcurrencyMode {
    Concurrent,
    Serial,
}

/// Identity and contract of an embedding backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub modality: Modality,
    pub dim: usize,
    pub version: String,
    pub concurrency: ConcurrencyMode,
}

/// What an embedding vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Frame,
    VideoPooled,
    Text,
    Fused,
}

/// Fixed-dimension float vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    kind: EmbeddingKind,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>, kind: EmbeddingKind) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::EmptyVector);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue(*bad));
        }
        Ok(EmbeddingVector { values, kind })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }
}

/// Ordered per-frame embeddings for one video, all the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStack {
    video_id: String,
    vectors: Vec<EmbeddingVector>,
}

impl EmbeddingStack {
    pub fn new(video_id: String, vectors: Vec<EmbeddingVector>) -> Result<Self, EmbeddingError> {
        if vectors.is_empty() {
            return Err(EmbeddingError::EmptyStack { video_id });
        }
        let dim = vectors[0].dim();
        for v in &vectors {
            if v.kind() != EmbeddingKind::Frame {
                return Err(EmbeddingError::KindMismatch {
                    expected: EmbeddingKind::Frame,
                    actual: v.kind(),
                });
            }
            if v.dim() != dim {
                return Err(EmbeddingError::HeterogeneousStack {
                    video_id,
                    expected: dim,
                    actual: v.dim(),
                });
            }
        }
        Ok(EmbeddingStack { video_id, vectors })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reduction from per-frame embeddings to one video embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMethod {
    Mean,
}

impl Default for PoolingMethod {
    fn default() -> Self {
        PoolingMethod::Mean
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding vector is empty")]
    EmptyVector,
    #[error("embedding contains non-finite value {0}")]
    NonFiniteValue(f32),
    #[error("video \"{video_id}\": empty frame list")]
    EmptyStack { video_id: String },
    #[error("video \"{video_id}\": frame embedding dim {actual} != stack dim {expected}")]
    HeterogeneousStack {
        video_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("expected {expected:?} embedding, got {actual:?}")]
    KindMismatch {
        expected: EmbeddingKind,
        actual: EmbeddingKind,
    },
    #[error("backend \"{backend_id}\" is {actual} but {expected} input was supplied")]
    ModalityMismatch {
        backend_id: String,
        expected: Modality,
        actual: Modality,
    },
    #[error("backend \"{backend_id}\" returned dim {actual}, descriptor says {expected}")]
    DimMismatch {
        backend_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("summary is empty after trimming")]
    EmptySummary,
    #[error("backend \"{backend_id}\" failed{}: {message}", context_suffix(.video_id))]
    Backend {
        backend_id: String,
        video_id: Option<String>,
        message: String,
    },
}

fn context_suffix(video_id: &Option<String>) -> String {
    match video_id {
        Some(id) => format!(" for video \"{id}\""),
        None => String::new(),
    }
}

/// An adapter that turns raw bytes into a fixed-dimension embedding.
///
/// Implementations must be deterministic: the same input bytes always yield
/// the same vector. Visual inputs are framed by
/// [`RawImage::to_backend_bytes`]; text inputs are trimmed UTF-8.
pub trait EmbeddingBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;
    fn embed(&self, input: &[u8]) -> Result<Vec<f32>, EmbeddingError>;
}

fn checked_embed(
    backend: &dyn EmbeddingBackend,
    input: &[u8],
    kind: EmbeddingKind,
    video_id: Option<&str>,
) -> Result<EmbeddingVector, EmbeddingError> {
    let descriptor = backend.descriptor();
    let values = backend.embed(input).map_err(|e| match e {
        EmbeddingError::Backend {
            backend_id,
            message,
            ..
        } => EmbeddingError::Backend {
            backend_id,
            video_id: video_id.map(str::to_string),
            message,
        },
        other => other,
    })?;
    if values.len() != descriptor.dim {
        return Err(EmbeddingError::DimMismatch {
            backend_id: descriptor.backend_id.clone(),
            expected: descriptor.dim,
            actual: values.len(),
        });
    }
    EmbeddingVector::new(values, kind)
}

/// Embeds every frame through a visual backend, preserving order.
pub fn embed_frames(
    backend: &dyn EmbeddingBackend,
    video_id: &str,
    frames: &[RawImage],
) -> Result<EmbeddingStack, EmbeddingError> {
    let descriptor = backend.descriptor();
    if descriptor.modality != Modality::Visual {
        return Err(EmbeddingError::ModalityMismatch {
            backend_id: descriptor.backend_id.clone(),
            expected: Modality::Visual,
            actual: descriptor.modality,
        });
    }
    if frames.is_empty() {
        return Err(EmbeddingError::EmptyStack {
            video_id: video_id.to_string(),
        });
    }
    let mut vectors = Vec::with_capacity(frames.len());
    for frame in frames {
        vectors.push(checked_embed(
            backend,
            &frame.to_backend_bytes(),
            EmbeddingKind::Frame,
            Some(video_id),
        )?);
    }
    EmbeddingStack::new(video_id.to_string(), vectors)
}

/// Pools a frame stack into one `VIDEO_POOLED` vector.
///
/// Mean pooling: `out[j] = (1/n) * sum_i stack[i][j]`, accumulated in f64.
pub fn pool_frames(stack: &EmbeddingStack, method: PoolingMethod) -> EmbeddingVector {
    match method {
        PoolingMethod::Mean => {
            let dim = stack.dim();
            let n = stack.len() as f64;
            let mut acc = vec![0.0f64; dim];
            for vector in stack.vectors() {
                for (a, &v) in acc.iter_mut().zip(vector.values()) {
                    *a += v as f64;
                }
            }
            let values: Vec<f32> = acc.into_iter().map(|a| (a / n) as f32).collect();
            EmbeddingVector::new(values, EmbeddingKind::VideoPooled)
                .expect("mean of finite values is finite")
        }
    }
}

/// Embeds a scene summary through a text backend.
pub fn embed_text(
    backend: &dyn EmbeddingBackend,
    summary: &str,
) -> Result<EmbeddingVector, EmbeddingError> {
    let descriptor = backend.descriptor();
    if descriptor.modality != Modality::Text {
        return Err(EmbeddingError::ModalityMismatch {
            backend_id: descriptor.backend_id.clone(),
            expected: Modality::Text,
            actual: descriptor.modality,
        });
    }
    let trimmed = summary.trim();
    if trimmed.is_empty() {
        return Err(EmbeddingError::EmptySummary);
    }
    checked_embed(backend, trimmed.as_bytes(), EmbeddingKind::Text, None)
}

/// Concatenates a pooled video embedding with a text embedding.
///
/// Video values come first, text values second, both copied bit-exactly.
pub fn fuse_concat(
    video: &EmbeddingVector,
    text: &EmbeddingVector,
) -> Result<EmbeddingVector, EmbeddingError> {
    if video.kind() != EmbeddingKind::VideoPooled {
        return Err(EmbeddingError::KindMismatch {
            expected: EmbeddingKind::VideoPooled,
            actual: video.kind(),
        });
    }
    if text.kind() != EmbeddingKind::Text {
        return Err(EmbeddingError::KindMismatch {
            expected: EmbeddingKind::Text,
            actual: text.kind(),
        });
    }
    let mut values = Vec::with_capacity(video.dim() + text.dim());
    values.extend_from_slice(video.values());
    values.extend_from_slice(text.values());
    EmbeddingVector::new(values, EmbeddingKind::Fused)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seed: u8) -> RawImage {
        RawImage::new(2, 2, vec![seed; 12])
    }

    fn visual(dim: usize) -> MockBackend {
        MockBackend::new(Modality::Visual, dim, 1)
    }

    fn text_backend(dim: usize) -> MockBackend {
        MockBackend::new(Modality::Text, dim, 2)
    }

    #[test]
    fn embed_fifty_frames_dim_512() {
        let backend = visual(512);
        let frames: Vec<RawImage> = (0..50).map(|i| frame(i as u8)).collect();
        let stack = embed_frames(&backend, "v", &frames).unwrap();
        assert_eq!(stack.len(), 50);
        assert!(stack.vectors().iter().all(|v| v.dim() == 512));
    }

    #[test]
    fn embed_single_frame() {
        let backend = visual(16);
        let stack = embed_frames(&backend, "v", &[frame(0)]).unwrap();
        assert_eq!(stack.len(), 1);
    }

    #[test]
    fn identical_frames_embed_identically() {
        let backend = visual(32);
        let stack = embed_frames(&backend, "v", &[frame(7), frame(7)]).unwrap();
        assert_eq!(stack.vectors()[0], stack.vectors()[1]);
    }

    #[test]
    fn empty_frame_list_rejected() {
        let backend = visual(8);
        assert!(matches!(
            embed_frames(&backend, "v", &[]),
            Err(EmbeddingError::EmptyStack { .. })
        ));
    }

    #[test]
    fn text_backend_rejected_for_frames() {
        let backend = text_backend(8);
        assert!(matches!(
            embed_frames(&backend, "v", &[frame(0)]),
            Err(EmbeddingError::ModalityMismatch { .. })
        ));
    }

    #[test]
    fn pool_of_constant_stack_is_identity() {
        let v = EmbeddingVector::new(vec![0.25, -1.5, 3.0], EmbeddingKind::Frame).unwrap();
        let stack = EmbeddingStack::new("v".into(), vec![v.clone(); 7]).unwrap();
        let pooled = pool_frames(&stack, PoolingMethod::Mean);
        assert_eq!(pooled.values(), v.values());
        assert_eq!(pooled.kind(), EmbeddingKind::VideoPooled);
    }

    #[test]
    fn pool_two_point_mean() {
        let a = EmbeddingVector::new(vec![0.0, 0.0], EmbeddingKind::Frame).unwrap();
        let b = EmbeddingVector::new(vec![2.0, 4.0], EmbeddingKind::Frame).unwrap();
        let stack = EmbeddingStack::new("v".into(), vec![a, b]).unwrap();
        assert_eq!(pool_frames(&stack, PoolingMethod::Mean).values(), &[1.0, 2.0]);
    }

    #[test]
    fn pool_matches_naive_double_loop_oracle() {
        use rand_chacha::rand_core::SeedableRng;
        let backend = visual(512);
        let mut frames = Vec::new();
        let mut rng = rand_chacha::ChaCha8Rng::from_seed([5u8; 32]);
        use rand_chacha::rand_core::RngCore;
        for _ in 0..50 {
            let mut pixels = vec![0u8; 12];
            rng.fill_bytes(&mut pixels);
            frames.push(RawImage::new(2, 2, pixels));
        }
        let stack = embed_frames(&backend, "v", &frames).unwrap();
        let pooled = pool_frames(&stack, PoolingMethod::Mean);

        // Naive oracle: per-column running sum in f64.
        for j in 0..stack.dim() {
            let mut sum = 0.0f64;
            for v in stack.vectors() {
                sum += v.values()[j] as f64;
            }
            let expected = sum / stack.len() as f64;
            assert!(
                (pooled.values()[j] as f64 - expected).abs() < 1e-6,
                "column {j}: {} vs oracle {expected}",
                pooled.values()[j]
            );
        }
    }

    #[test]
    fn pooling_is_order_invariant() {
        let a = EmbeddingVector::new(vec![1.0, 2.0], EmbeddingKind::Frame).unwrap();
        let b = EmbeddingVector::new(vec![-3.0, 5.0], EmbeddingKind::Frame).unwrap();
        let c = EmbeddingVector::new(vec![0.5, 0.25], EmbeddingKind::Frame).unwrap();
        let fwd = EmbeddingStack::new("v".into(), vec![a.clone(), b.clone(), c.clone()]).unwrap();
        let rev = EmbeddingStack::new("v".into(), vec![c, b, a]).unwrap();
        assert_eq!(
            pool_frames(&fwd, PoolingMethod::Mean).values(),
            pool_frames(&rev, PoolingMethod::Mean).values()
        );
    }

    #[test]
    fn embed_text_contract() {
        let backend = text_backend(768);
        let v = embed_text(&backend, "two people argue near a road").unwrap();
        assert_eq!(v.dim(), 768);
        assert_eq!(v.kind(), EmbeddingKind::Text);

        let again = embed_text(&backend, "two people argue near a road").unwrap();
        assert_eq!(v, again, "same summary must embed identically");

        assert!(matches!(
            embed_text(&backend, ""),
            Err(EmbeddingError::EmptySummary)
        ));
        assert!(matches!(
            embed_text(&backend, "   \t "),
            Err(EmbeddingError::EmptySummary)
        ));
    }

    #[test]
    fn fuse_concat_dims_and_order() {
        let video =
            EmbeddingVector::new(vec![1.0, 2.0], EmbeddingKind::VideoPooled).unwrap();
        let text = EmbeddingVector::new(vec![3.0], EmbeddingKind::Text).unwrap();
        let fused = fuse_concat(&video, &text).unwrap();
        assert_eq!(fused.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(fused.kind(), EmbeddingKind::Fused);
        assert_eq!(fused.dim(), video.dim() + text.dim());
    }

    #[test]
    fn fuse_concat_preserves_bits() {
        let backend_v = visual(512);
        let backend_t = text_backend(768);
        let frames: Vec<RawImage> = (0..5).map(|i| frame(i as u8)).collect();
        let stack = embed_frames(&backend_v, "v", &frames).unwrap();
        let pooled = pool_frames(&stack, PoolingMethod::Mean);
        let text = embed_text(&backend_t, "a summary").unwrap();
        let fused = fuse_concat(&pooled, &text).unwrap();
        assert_eq!(fused.dim(), 1280);
        assert_eq!(&fused.values()[..512], pooled.values());
        assert_eq!(&fused.values()[512..], text.values());
    }

    #[test]
    fn fuse_concat_rejects_kind_mismatch() {
        let a = EmbeddingVector::new(vec![1.0], EmbeddingKind::Text).unwrap();
        let b = EmbeddingVector::new(vec![1.0], EmbeddingKind::Text).unwrap();
        assert!(matches!(
            fuse_concat(&a, &b),
            Err(EmbeddingError::KindMismatch { .. })
        ));
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f32::NAN], EmbeddingKind::Frame),
            Err(EmbeddingError::NonFiniteValue(_))
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![], EmbeddingKind::Frame),
            Err(EmbeddingError::EmptyVector)
        ));
    }
}
