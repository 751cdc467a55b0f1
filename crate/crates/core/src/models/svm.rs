//! Soft-margin SVM trained with a sequential minimal optimization solver.
//!
//! Binary labels map to {-1, +1} with `HIGH_ALERT` positive. The decision
//! function is `f(x) = sum_i coef_i * K(sv_i, x) + b`; the predicted label
//! is `HIGH_ALERT` iff `f(x) >= 0`.
//!
//! Kernels: linear `x.y`, and RBF `exp(-|x - y|^2 / (2 * width^2))` where
//! the width either comes from the config or is derived from the data as
//! `1 / (dim * feature variance)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::AlertLabel;
use crate::embedding::{EmbeddingKind, EmbeddingVector};
use crate::hash::seed_for;

use super::{
    artifact_from_params, KernelWidth, ModelConfigSnapshot, ModelError, ModelKind, ModelParams,
    SvmConfig, SvmKernel, SvmParams, TrainedModelArtifact,
};

const TOLERANCE: f64 = 1e-3;
const ALPHA_STEP_MIN: f64 = 1e-5;
const QUIET_PASSES: usize = 5;
const SWEEP_CAP: usize = 10_000;
const SUPPORT_EPS: f64 = 1e-8;

fn kernel_fn(kernel: SvmKernel, width: f64, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        SvmKernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        SvmKernel::Rbf => {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-sq / (2.0 * width * width)).exp()
        }
    }
}

/// `1 / (dim * feature variance)` over all feature entries, guarded
/// against degenerate (constant) data.
fn auto_width(xs: &[Vec<f64>], dim: usize) -> f64 {
    let n = (xs.len() * dim) as f64;
    let mean: f64 = xs.iter().flatten().sum::<f64>() / n;
    let var: f64 = xs
        .iter()
        .flatten()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if var > f64::EPSILON {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

/// Trains an SVM on text embeddings.
pub fn train_svm(
    features: &[EmbeddingVector],
    labels: &[AlertLabel],
    config: &SvmConfig,
) -> Result<TrainedModelArtifact, ModelError> {
    config.validate()?;
    if features.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if features.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            features: features.len(),
            targets: labels.len(),
        });
    }
    let dim = features[0].dim();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(features.len());
    for f in features {
        if f.kind() != EmbeddingKind::Text {
            return Err(ModelError::FeatureKindMismatch {
                expected: EmbeddingKind::Text,
                actual: f.kind(),
            });
        }
        if f.dim() != dim {
            return Err(ModelError::DimMismatch {
                expected: dim,
                actual: f.dim(),
            });
        }
        xs.push(f.values().iter().map(|&v| v as f64).collect());
    }
    let ys: Vec<f64> = labels
        .iter()
        .map(|&l| if l == AlertLabel::HighAlert { 1.0 } else { -1.0 })
        .collect();
    if ys.iter().all(|&y| y > 0.0) || ys.iter().all(|&y| y < 0.0) {
        return Err(ModelError::SingleClass);
    }

    let width = match config.kernel_width {
        KernelWidth::Fixed(w) => w,
        KernelWidth::Auto => auto_width(&xs, dim),
    };

    let n = xs.len();
    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let k = kernel_fn(config.kernel, width, &xs[i], &xs[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let (alphas, bias) = smo(&gram, &ys, config.regularization_c, config.seed)?;

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for i in 0..n {
        if alphas[i] > SUPPORT_EPS {
            support_vectors.extend(xs[i].iter().map(|&v| v as f32));
            coefficients.push((alphas[i] * ys[i]) as f32);
        }
    }

    Ok(artifact_from_params(
        ModelKind::Svm,
        ModelConfigSnapshot::Svm(config.clone()),
        ModelParams::Svm(SvmParams {
            dim,
            support_vectors,
            coefficients,
            bias: bias as f32,
            kernel: config.kernel,
            kernel_width: width,
        }),
    ))
}

/// Simplified SMO over the precomputed Gram matrix. Returns alphas and the
/// bias term.
fn smo(gram: &[f64], ys: &[f64], c: f64, seed: u64) -> Result<(Vec<f64>, f64), ModelError> {
    let n = ys.len();
    let mut alphas = vec![0.0f64; n];
    let mut bias = 0.0f64;
    let mut rng = ChaCha8Rng::from_seed(seed_for(seed, "svm-smo"));

    let decision = |alphas: &[f64], bias: f64, i: usize| -> f64 {
        let mut acc = bias;
        for j in 0..n {
            if alphas[j] > 0.0 {
                acc += alphas[j] * ys[j] * gram[j * n + i];
            }
        }
        acc
    };

    let mut quiet_passes = 0;
    let mut sweeps = 0;
    while quiet_passes < QUIET_PASSES {
        sweeps += 1;
        if sweeps > SWEEP_CAP {
            return Err(ModelError::NonConvergence { sweeps: SWEEP_CAP });
        }
        let mut changed = 0;
        for i in 0..n {
            let err_i = decision(&alphas, bias, i) - ys[i];
            let violates = (ys[i] * err_i < -TOLERANCE && alphas[i] < c)
                || (ys[i] * err_i > TOLERANCE && alphas[i] > 0.0);
            if !violates {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let err_j = decision(&alphas, bias, j) - ys[j];

            let (alpha_i_old, alpha_j_old) = (alphas[i], alphas[j]);
            let (low, high) = if (ys[i] - ys[j]).abs() > f64::EPSILON {
                (
                    (alpha_j_old - alpha_i_old).max(0.0),
                    (c + alpha_j_old - alpha_i_old).min(c),
                )
            } else {
                (
                    (alpha_i_old + alpha_j_old - c).max(0.0),
                    (alpha_i_old + alpha_j_old).min(c),
                )
            };
            if high - low < f64::EPSILON {
                continue;
            }
            let eta = 2.0 * gram[i * n + j] - gram[i * n + i] - gram[j * n + j];
            if eta >= 0.0 {
                continue;
            }

            let mut alpha_j = alpha_j_old - ys[j] * (err_i - err_j) / eta;
            alpha_j = alpha_j.clamp(low, high);
            if (alpha_j - alpha_j_old).abs() < ALPHA_STEP_MIN {
                continue;
            }
            let alpha_i = alpha_i_old + ys[i] * ys[j] * (alpha_j_old - alpha_j);
            alphas[i] = alpha_i;
            alphas[j] = alpha_j;

            let b1 = bias
                - err_i
                - ys[i] * (alpha_i - alpha_i_old) * gram[i * n + i]
                - ys[j] * (alpha_j - alpha_j_old) * gram[i * n + j];
            let b2 = bias
                - err_j
                - ys[i] * (alpha_i - alpha_i_old) * gram[i * n + j]
                - ys[j] * (alpha_j - alpha_j_old) * gram[j * n + j];
            bias = if alpha_i > 0.0 && alpha_i < c {
                b1
            } else if alpha_j > 0.0 && alpha_j < c {
                b2
            } else {
                (b1 + b2) / 2.0
            };
            changed += 1;
        }
        if changed == 0 {
            quiet_passes += 1;
        } else {
            quiet_passes = 0;
        }
    }
    Ok((alphas, bias))
}

fn svm_params(artifact: &TrainedModelArtifact) -> &SvmParams {
    match &artifact.params {
        ModelParams::Svm(p) => p,
        ModelParams::Mlp(_) => unreachable!("kind checked by caller"),
    }
}

/// Evaluates the decision function; `HIGH_ALERT` iff it is nonnegative.
pub fn svm_predict(
    artifact: &TrainedModelArtifact,
    feature: &EmbeddingVector,
) -> Result<(AlertLabel, f64), ModelError> {
    if artifact.model_kind != ModelKind::Svm {
        return Err(ModelError::KindMismatch {
            expected: ModelKind::Svm,
            actual: artifact.model_kind,
        });
    }
    let params = svm_params(artifact);
    if feature.dim() != params.dim {
        return Err(ModelError::DimMismatch {
            expected: params.dim,
            actual: feature.dim(),
        });
    }
    let x: Vec<f64> = feature.values().iter().map(|&v| v as f64).collect();
    let mut decision = params.bias as f64;
    for (sv, &coef) in params
        .support_vectors
        .chunks_exact(params.dim)
        .zip(&params.coefficients)
    {
        let sv_f64: Vec<f64> = sv.iter().map(|&v| v as f64).collect();
        decision += coef as f64 * kernel_fn(params.kernel, params.kernel_width, &sv_f64, &x);
    }
    let label = if decision >= 0.0 {
        AlertLabel::HighAlert
    } else {
        AlertLabel::NoAlert
    };
    Ok((label, decision))
}
