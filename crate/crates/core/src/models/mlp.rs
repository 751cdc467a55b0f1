//! Fully connected network with two heads: a 2-logit softmax classifier
//! trained with cross-entropy, and a scalar regressor trained with MSE.
//!
//! Training runs in f64 with ReLU hidden layers, inverted dropout, and
//! adaptive-moment gradient descent, all driven by seeded ChaCha streams.
//! Finished parameters are quantized to f32 for the artifact; inference
//! promotes them back to f64.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::AlertLabel;
use crate::embedding::{EmbeddingKind, EmbeddingVector};
use crate::hash::seed_for;

use super::{
    artifact_from_params, DenseParams, MlpConfig, MlpHead, MlpParams, ModelConfigSnapshot,
    ModelError, ModelKind, ModelParams, TrainedModelArtifact, TrainingLog,
};

struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `[out][in]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Training-time network (f64 parameters).
pub struct MlpNet {
    head: MlpHead,
    layers: Vec<DenseLayer>,
}

/// Targets for one batch.
pub enum BatchTargets<'a> {
    /// Class indices (0 = no alert, 1 = high alert).
    Classes(&'a [usize]),
    /// Regression targets.
    Values(&'a [f64]),
}

/// Per-layer gradients matching [`MlpNet`]'s parameter layout.
pub struct MlpGrads {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MlpNet {
    /// Fan-in-scaled uniform weight init, zero biases.
    pub fn init(config: &MlpConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![config.input_dim];
        dims.extend_from_slice(&config.hidden_dims);
        dims.push(config.output_dim());

        let layers = dims
            .windows(2)
            .map(|w| {
                let (in_dim, out_dim) = (w[0], w[1]);
                let bound = 1.0 / (in_dim as f64).sqrt();
                let weights = (0..in_dim * out_dim)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                DenseLayer {
                    in_dim,
                    out_dim,
                    weights,
                    bias: vec![0.0; out_dim],
                }
            })
            .collect();

        MlpNet {
            head: config.head,
            layers,
        }
    }

    pub fn head(&self) -> MlpHead {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for layer in &self.layers {
            if idx < layer.weights.len() {
                return layer.weights[idx];
            }
            idx -= layer.weights.len();
            if idx < layer.bias.len() {
                return layer.bias[idx];
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for layer in &mut self.layers {
            if idx < layer.weights.len() {
                layer.weights[idx] = value;
                return;
            }
            idx -= layer.weights.len();
            if idx < layer.bias.len() {
                layer.bias[idx] = value;
                return;
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Inference forward pass (no dropout): ReLU hidden layers, linear head.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut activation = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &activation);
            if li != last {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            activation = z;
        }
        activation
    }

    /// Mean loss over the batch, dropout disabled.
    pub fn batch_loss(&self, xs: &[&[f64]], targets: &BatchTargets) -> f64 {
        let mut sum = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let out = self.forward(x);
            sum += sample_loss(self.head, &out, targets, i);
        }
        sum / xs.len() as f64
    }

    /// Mean loss and parameter gradients over the batch.
    ///
    /// `dropout` carries the drop probability and the stream masks are
    /// drawn from; pass `None` at evaluation time and for gradient checks.
    pub fn batch_loss_and_grads(
        &self,
        xs: &[&[f64]],
        targets: &BatchTargets,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (f64, MlpGrads) {
        let batch = xs.len() as f64;
        let mut grads = MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        };
        let mut loss_sum = 0.0;
        let last = self.layers.len() - 1;

        for (si, x) in xs.iter().enumerate() {
            // Forward, recording activations (post-ReLU, post-dropout) and
            // dropout masks per hidden layer.
            let mut activations: Vec<Vec<f64>> = vec![x.to_vec()];
            let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.layers.len());
            for (li, layer) in self.layers.iter().enumerate() {
                let mut z = affine(layer, activations.last().unwrap());
                if li != last {
                    for v in &mut z {
                        *v = v.max(0.0);
                    }
                    if let Some((rate, rng)) = dropout.as_mut() {
                        let keep = 1.0 - *rate;
                        let mask: Vec<f64> = z
                            .iter()
                            .map(|_| {
                                if rng.random::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        for (v, m) in z.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        masks.push(Some(mask));
                    } else {
                        masks.push(None);
                    }
                } else {
                    masks.push(None);
                }
                activations.push(z);
            }

            let out = activations.last().unwrap();
            loss_sum += sample_loss(self.head, out, targets, si);

            // Output delta: dL/dz for this sample, pre-divided by batch size.
            let mut delta = output_delta(self.head, out, targets, si);
            for d in &mut delta {
                *d /= batch;
            }

            // Backward through the layers.
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &activations[li];
                let (dw, db) = &mut grads.layers[li];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    db[o] += d;
                    let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (w, &inp) in row.iter_mut().zip(input.iter()) {
                        *w += d * inp;
                    }
                }
                if li == 0 {
                    break;
                }
                // delta for the previous layer's output.
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, &w) in prev.iter_mut().zip(row.iter()) {
                        *p += d * w;
                    }
                }
                // Through dropout and ReLU of layer li-1.
                if let Some(mask) = &masks[li - 1] {
                    for (p, &m) in prev.iter_mut().zip(mask.iter()) {
                        *p *= m;
                    }
                }
                let prev_activation = &activations[li];
                for (p, &a) in prev.iter_mut().zip(prev_activation.iter()) {
                    // Post-activation value is 0 exactly when the unit was
                    // clamped (or dropped), so it doubles as the ReLU gate.
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }

        (loss_sum / batch, grads)
    }
}

fn affine(layer: &DenseLayer, input: &[f64]) -> Vec<f64> {
    let mut out = layer.bias.clone();
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = 0.0;
        for (&w, &x) in row.iter().zip(input.iter()) {
            acc += w * x;
        }
        *out_v += acc;
    }
    out
}

fn sample_loss(head: MlpHead, out: &[f64], targets: &BatchTargets, i: usize) -> f64 {
    match (head, targets) {
        (MlpHead::BinaryClassifier, BatchTargets::Classes(ys)) => {
            let y = ys[i];
            let m = out[0].max(out[1]);
            let lse = m + ((out[0] - m).exp() + (out[1] - m).exp()).ln();
            lse - out[y]
        }
        (MlpHead::Regressor, BatchTargets::Values(ts)) => {
            let d = out[0] - ts[i];
            d * d
        }
        _ => panic!("target type does not match network head"),
    }
}

fn output_delta(head: MlpHead, out: &[f64], targets: &BatchTargets, i: usize) -> Vec<f64> {
    match (head, targets) {
        (MlpHead::BinaryClassifier, BatchTargets::Classes(ys)) => {
            let y = ys[i];
            let m = out[0].max(out[1]);
            let e0 = (out[0] - m).exp();
            let e1 = (out[1] - m).exp();
            let z = e0 + e1;
            let mut delta = vec![e0 / z, e1 / z];
            delta[y] -= 1.0;
            delta
        }
        (MlpHead::Regressor, BatchTargets::Values(ts)) => vec![2.0 * (out[0] - ts[i])],
        _ => panic!("target type does not match network head"),
    }
}

impl MlpGrads {
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for (dw, db) in &self.layers {
            if idx < dw.len() {
                return dw[idx];
            }
            idx -= dw.len();
            if idx < db.len() {
                return db[idx];
            }
            idx -= db.len();
        }
        panic!("gradient index out of range");
    }
}

/// Adaptive-moment gradient descent (bias-corrected first/second moments).
struct MomentOptimizer {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl MomentOptimizer {
    fn new(lr: f64, param_count: usize) -> Self {
        MomentOptimizer {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    fn apply(&mut self, net: &mut MlpNet, grads: &MlpGrads) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut cursor = 0;
        for (layer, (dw, db)) in net.layers.iter_mut().zip(&grads.layers) {
            for (p, &g) in layer.weights.iter_mut().zip(dw.iter()) {
                update_one(
                    p, g, &mut self.m[cursor], &mut self.v[cursor],
                    self.lr, self.beta1, self.beta2, self.eps, bc1, bc2,
                );
                cursor += 1;
            }
            for (p, &g) in layer.bias.iter_mut().zip(db.iter()) {
                update_one(
                    p, g, &mut self.m[cursor], &mut self.v[cursor],
                    self.lr, self.beta1, self.beta2, self.eps, bc1, bc2,
                );
                cursor += 1;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_one(
    p: &mut f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    *m = beta1 * *m + (1.0 - beta1) * g;
    *v = beta2 * *v + (1.0 - beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= lr * m_hat / (v_hat.sqrt() + eps);
}

enum OwnedTargets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

fn validate_features(
    features: &[EmbeddingVector],
    expected_dim: usize,
) -> Result<Vec<Vec<f64>>, ModelError> {
    if features.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut xs = Vec::with_capacity(features.len());
    for f in features {
        if f.kind() != EmbeddingKind::Fused {
            return Err(ModelError::FeatureKindMismatch {
                expected: EmbeddingKind::Fused,
                actual: f.kind(),
            });
        }
        if f.dim() != expected_dim {
            return Err(ModelError::DimMismatch {
                expected: expected_dim,
                actual: f.dim(),
            });
        }
        xs.push(f.values().iter().map(|&v| v as f64).collect());
    }
    Ok(xs)
}

fn run_training(
    xs: &[Vec<f64>],
    targets: &OwnedTargets,
    config: &MlpConfig,
) -> Result<(MlpNet, TrainingLog), ModelError> {
    let start = std::time::Instant::now();
    let mut init_rng = ChaCha8Rng::from_seed(seed_for(config.seed, "mlp-init"));
    let mut net = MlpNet::init(config, &mut init_rng);
    let mut train_rng = ChaCha8Rng::from_seed(seed_for(config.seed, "mlp-train"));
    let mut optimizer = MomentOptimizer::new(config.learning_rate, net.param_count());

    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut train_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let bxs: Vec<&[f64]> = chunk.iter().map(|&i| xs[i].as_slice()).collect();
            let (gathered_c, gathered_v);
            let bt = match targets {
                OwnedTargets::Classes(ys) => {
                    gathered_c = chunk.iter().map(|&i| ys[i]).collect::<Vec<_>>();
                    BatchTargets::Classes(&gathered_c)
                }
                OwnedTargets::Values(ts) => {
                    gathered_v = chunk.iter().map(|&i| ts[i]).collect::<Vec<_>>();
                    BatchTargets::Values(&gathered_v)
                }
            };
            let dropout = if config.dropout_rate > 0.0 {
                Some((config.dropout_rate, &mut train_rng))
            } else {
                None
            };
            let (loss, grads) = net.batch_loss_and_grads(&bxs, &bt, dropout);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            optimizer.apply(&mut net, &grads);
            loss_sum += loss * chunk.len() as f64;
        }
        epoch_losses.push(loss_sum / n as f64);
    }

    let final_train_loss = *epoch_losses.last().unwrap();
    Ok((
        net,
        TrainingLog {
            epoch_losses,
            final_train_loss,
            wall_clock_secs: start.elapsed().as_secs_f64(),
            seed: config.seed,
        },
    ))
}

fn quantize(net: &MlpNet) -> MlpParams {
    MlpParams {
        head: net.head,
        layers: net
            .layers
            .iter()
            .map(|l| DenseParams {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                weights: l.weights.iter().map(|&w| w as f32).collect(),
                bias: l.bias.iter().map(|&b| b as f32).collect(),
            })
            .collect(),
    }
}

/// Trains the binary alert classifier (softmax over 2 logits,
/// cross-entropy loss, dropout on hidden layers).
pub fn train_binary_classifier(
    features: &[EmbeddingVector],
    labels: &[AlertLabel],
    config: &MlpConfig,
) -> Result<(TrainedModelArtifact, TrainingLog), ModelError> {
    config.validate()?;
    if config.head != MlpHead::BinaryClassifier {
        return Err(ModelError::ConfigInvalid(
            "head must be binary_classifier".into(),
        ));
    }
    if features.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            features: features.len(),
            targets: labels.len(),
        });
    }
    let xs = validate_features(features, config.input_dim)?;
    let classes: Vec<usize> = labels
        .iter()
        .map(|&l| (l == AlertLabel::HighAlert) as usize)
        .collect();
    if classes.iter().all(|&c| c == 0) || classes.iter().all(|&c| c == 1) {
        return Err(ModelError::SingleClass);
    }

    let (net, log) = run_training(&xs, &OwnedTargets::Classes(classes), config)?;
    let artifact = artifact_from_params(
        ModelKind::MlpBinary,
        ModelConfigSnapshot::Mlp(config.clone()),
        ModelParams::Mlp(quantize(&net)),
    );
    Ok((artifact, log))
}

/// Trains the danger-score regressor (scalar head, MSE loss). Targets must
/// lie in `[0, 10]`; outputs are clamped at inference only.
pub fn train_regressor(
    features: &[EmbeddingVector],
    targets: &[f64],
    config: &MlpConfig,
) -> Result<(TrainedModelArtifact, TrainingLog), ModelError> {
    config.validate()?;
    if config.head != MlpHead::Regressor {
        return Err(ModelError::ConfigInvalid("head must be regressor".into()));
    }
    if features.len() != targets.len() {
        return Err(ModelError::LengthMismatch {
            features: features.len(),
            targets: targets.len(),
        });
    }
    for (index, &value) in targets.iter().enumerate() {
        if !(value.is_finite() && (0.0..=10.0).contains(&value)) {
            return Err(ModelError::TargetOutOfRange { index, value });
        }
    }
    let xs = validate_features(features, config.input_dim)?;

    let (net, log) = run_training(&xs, &OwnedTargets::Values(targets.to_vec()), config)?;
    let artifact = artifact_from_params(
        ModelKind::MlpRegressor,
        ModelConfigSnapshot::Mlp(config.clone()),
        ModelParams::Mlp(quantize(&net)),
    );
    Ok((artifact, log))
}

fn mlp_params(artifact: &TrainedModelArtifact) -> &MlpParams {
    match &artifact.params {
        ModelParams::Mlp(p) => p,
        ModelParams::Svm(_) => unreachable!("kind checked by caller"),
    }
}

fn forward_quantized(params: &MlpParams, x: &[f32]) -> Vec<f64> {
    let mut activation: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let last = params.layers.len() - 1;
    for (li, layer) in params.layers.iter().enumerate() {
        let mut z = vec![0.0f64; layer.out_dim];
        for (o, out_v) in z.iter_mut().enumerate() {
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            let mut acc = layer.bias[o] as f64;
            for (&w, &a) in row.iter().zip(activation.iter()) {
                acc += w as f64 * a;
            }
            *out_v = acc;
        }
        if li != last {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        activation = z;
    }
    activation
}

fn check_mlp_input(
    artifact: &TrainedModelArtifact,
    expected_kind: ModelKind,
    feature: &EmbeddingVector,
) -> Result<(), ModelError> {
    if artifact.model_kind != expected_kind {
        return Err(ModelError::KindMismatch {
            expected: expected_kind,
            actual: artifact.model_kind,
        });
    }
    if feature.dim() != artifact.input_dim() {
        return Err(ModelError::DimMismatch {
            expected: artifact.input_dim(),
            actual: feature.dim(),
        });
    }
    Ok(())
}

/// Classifies a fused feature vector. Returns the label and the
/// probability of `HIGH_ALERT` (softmax over the two logits); ties at 0.5
/// resolve to `HIGH_ALERT`.
pub fn predict_alert(
    artifact: &TrainedModelArtifact,
    feature: &EmbeddingVector,
) -> Result<(AlertLabel, f64), ModelError> {
    check_mlp_input(artifact, ModelKind::MlpBinary, feature)?;
    let logits = forward_quantized(mlp_params(artifact), feature.values());
    // softmax_1 = 1 / (1 + exp(z0 - z1)), computed in the stable direction.
    let d = logits[0] - logits[1];
    let p_high = if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    };
    let label = if p_high >= 0.5 {
        AlertLabel::HighAlert
    } else {
        AlertLabel::NoAlert
    };
    Ok((label, p_high))
}

/// Predicts a continuous danger score, clamped into `[0, 10]`.
pub fn predict_score(
    artifact: &TrainedModelArtifact,
    feature: &EmbeddingVector,
) -> Result<f64, ModelError> {
    check_mlp_input(artifact, ModelKind::MlpRegressor, feature)?;
    let out = forward_quantized(mlp_params(artifact), feature.values());
    Ok(out[0].clamp(0.0, 10.0))
}

/// Compares analytic gradients against central finite differences and
/// returns the maximum relative error over all parameters.
pub fn gradient_check(
    net: &mut MlpNet,
    xs: &[&[f64]],
    targets: &BatchTargets,
    step: f64,
) -> f64 {
    let (_, grads) = net.batch_loss_and_grads(xs, targets, None);
    let mut max_rel = 0.0f64;
    for i in 0..net.param_count() {
        let original = net.get_param(i);
        net.set_param(i, original + step);
        let loss_plus = net.batch_loss(xs, targets);
        net.set_param(i, original - step);
        let loss_minus = net.batch_loss(xs, targets);
        net.set_param(i, original);

        let numeric = (loss_plus - loss_minus) / (2.0 * step);
        let analytic = grads.get_flat(i);
        let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{MockBackend, Modality};
    use crate::models::{artifact::artifact_to_bytes, BackendBindings};

    fn fused(values: Vec<f32>) -> EmbeddingVector {
        EmbeddingVector::new(values, EmbeddingKind::Fused).unwrap()
    }

    /// 200 mock-embedded samples with a strong additive class signal.
    fn separable_set(n: usize, dim: usize) -> (Vec<EmbeddingVector>, Vec<AlertLabel>) {
        let backend = MockBackend::new(Modality::Text, dim, 11).with_class_signal(1.0);
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u8;
            let input = format!("sample {i} marker {class}");
            let values = crate::embedding::EmbeddingBackend::embed(&backend, input.as_bytes())
                .unwrap();
            features.push(fused(values));
            labels.push(if class == 1 {
                AlertLabel::HighAlert
            } else {
                AlertLabel::NoAlert
            });
        }
        (features, labels)
    }

    fn small_classifier_config(input_dim: usize) -> MlpConfig {
        MlpConfig {
            hidden_dims: vec![32, 16],
            epochs: 40,
            ..MlpConfig::binary(input_dim, 42)
        }
    }

    #[test]
    fn gradient_check_both_heads_small_net() {
        // hidden [5, 3], input dim 4, batch 8, per the published invariant.
        let mut rng = ChaCha8Rng::from_seed(seed_for(7, "gradcheck-data"));
        let xs_data: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let xs: Vec<&[f64]> = xs_data.iter().map(|v| v.as_slice()).collect();

        for head in [MlpHead::BinaryClassifier, MlpHead::Regressor] {
            let config = MlpConfig {
                input_dim: 4,
                hidden_dims: vec![5, 3],
                head,
                ..MlpConfig::binary(4, 7)
            };
            let mut init_rng = ChaCha8Rng::from_seed(seed_for(13, "gradcheck-init"));
            let mut net = MlpNet::init(&config, &mut init_rng);

            let classes: Vec<usize> = (0..8).map(|i| i % 2).collect();
            let values: Vec<f64> = (0..8).map(|i| 1.0 + i as f64 * 0.5).collect();
            let targets = match head {
                MlpHead::BinaryClassifier => BatchTargets::Classes(&classes),
                MlpHead::Regressor => BatchTargets::Values(&values),
            };
            let max_rel = gradient_check(&mut net, &xs, &targets, 1e-5);
            assert!(
                max_rel <= 1e-4,
                "gradient mismatch for {head:?}: max relative error {max_rel:e}"
            );
        }
    }

    #[test]
    fn separable_set_reaches_high_train_accuracy() {
        let (features, labels) = separable_set(200, 32);
        let config = small_classifier_config(32);
        let (artifact, log) = train_binary_classifier(&features, &labels, &config).unwrap();
        assert!(log.epoch_losses.iter().all(|l| l.is_finite()));

        let correct = features
            .iter()
            .zip(&labels)
            .filter(|(f, &l)| predict_alert(&artifact, f).unwrap().0 == l)
            .count();
        let acc = correct as f64 / labels.len() as f64;
        assert!(acc >= 0.99, "train accuracy {acc} below 0.99");
    }

    #[test]
    fn zero_epochs_is_a_config_error() {
        let (features, labels) = separable_set(10, 8);
        let config = MlpConfig {
            epochs: 0,
            ..MlpConfig::binary(8, 1)
        };
        assert!(matches!(
            train_binary_classifier(&features, &labels, &config),
            Err(ModelError::ConfigInvalid(_))
        ));
    }

    #[test]
    fn same_seed_trains_bitwise_identical_artifacts() {
        let (features, labels) = separable_set(60, 16);
        let config = MlpConfig {
            hidden_dims: vec![8],
            epochs: 5,
            ..MlpConfig::binary(16, 99)
        };
        let (a, _) = train_binary_classifier(&features, &labels, &config).unwrap();
        let (b, _) = train_binary_classifier(&features, &labels, &config).unwrap();
        assert_eq!(
            artifact_to_bytes(&a).unwrap(),
            artifact_to_bytes(&b).unwrap(),
            "artifacts must be bitwise identical"
        );
    }

    #[test]
    fn single_class_training_set_rejected() {
        let (features, _) = separable_set(10, 8);
        let labels = vec![AlertLabel::HighAlert; 10];
        let config = MlpConfig::binary(8, 1);
        assert!(matches!(
            train_binary_classifier(&features, &labels, &config),
            Err(ModelError::SingleClass)
        ));
    }

    #[test]
    fn zero_weight_artifact_predicts_half() {
        // Logits (0, 0) must give probability exactly 0.5 and a HIGH_ALERT
        // tie-break.
        let artifact = TrainedModelArtifact {
            model_kind: ModelKind::MlpBinary,
            config: ModelConfigSnapshot::Mlp(MlpConfig::binary(3, 0)),
            backends: BackendBindings::default(),
            pooling: crate::embedding::PoolingMethod::Mean,
            threshold: 7.0,
            format_version: 1,
            params: ModelParams::Mlp(MlpParams {
                head: MlpHead::BinaryClassifier,
                layers: vec![DenseParams {
                    in_dim: 3,
                    out_dim: 2,
                    weights: vec![0.0; 6],
                    bias: vec![0.0; 2],
                }],
            }),
        };
        let (label, p) = predict_alert(&artifact, &fused(vec![0.3, -0.7, 2.0])).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(label, AlertLabel::HighAlert);
    }

    #[test]
    fn label_and_probability_are_consistent() {
        let (features, labels) = separable_set(80, 16);
        let config = MlpConfig {
            hidden_dims: vec![8],
            epochs: 10,
            ..MlpConfig::binary(16, 3)
        };
        let (artifact, _) = train_binary_classifier(&features, &labels, &config).unwrap();
        for f in &features {
            let (label, p) = predict_alert(&artifact, f).unwrap();
            assert!((0.0..=1.0).contains(&p));
            let expected = if p >= 0.5 {
                AlertLabel::HighAlert
            } else {
                AlertLabel::NoAlert
            };
            assert_eq!(label, expected);
        }
    }

    #[test]
    fn constant_targets_learn_constant_predictor() {
        // Zero hidden layers: the MSE optimum is the constant mean.
        let mut rng = ChaCha8Rng::from_seed(seed_for(5, "const-reg"));
        let features: Vec<EmbeddingVector> = (0..32)
            .map(|_| fused((0..4).map(|_| rng.random_range(-0.5..0.5)).collect()))
            .collect();
        let targets = vec![5.3; 32];
        let config = MlpConfig {
            hidden_dims: vec![],
            dropout_rate: 0.0,
            learning_rate: 0.05,
            epochs: 1500,
            batch_size: 32,
            ..MlpConfig::regressor(4, 8)
        };
        let (artifact, _) = train_regressor(&features, &targets, &config).unwrap();
        for f in &features {
            let pred = predict_score(&artifact, f).unwrap();
            assert!(
                (pred - 5.3).abs() <= 1e-3,
                "prediction {pred} not within 1e-3 of 5.3"
            );
        }
    }

    #[test]
    fn linear_target_generalizes() {
        // y = w.x + b with |w| = 2, b = 5; targets stay in [3, 7] because
        // the features are unit vectors.
        let dim = 16;
        let backend = MockBackend::new(Modality::Text, dim, 21);
        let mut w_rng = ChaCha8Rng::from_seed(seed_for(77, "linear-w"));
        let mut w: Vec<f64> = (0..dim).map(|_| w_rng.random_range(-1.0..1.0)).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut w {
            *x *= 2.0 / norm;
        }

        let mut features = Vec::new();
        let mut targets = Vec::new();
        for i in 0..150 {
            let values =
                crate::embedding::EmbeddingBackend::embed(&backend, format!("x{i}").as_bytes())
                    .unwrap();
            let y = 5.0
                + values
                    .iter()
                    .zip(&w)
                    .map(|(&v, &wi)| v as f64 * wi)
                    .sum::<f64>();
            features.push(fused(values));
            targets.push(y);
        }

        let (train_f, test_f) = features.split_at(120);
        let (train_t, test_t) = targets.split_at(120);
        let config = MlpConfig {
            hidden_dims: vec![32],
            dropout_rate: 0.0,
            learning_rate: 5e-3,
            epochs: 200,
            ..MlpConfig::regressor(dim, 14)
        };
        let (artifact, _) = train_regressor(train_f, train_t, &config).unwrap();

        let mse = test_f
            .iter()
            .zip(test_t)
            .map(|(f, &t)| {
                let p = predict_score(&artifact, f).unwrap();
                (p - t) * (p - t)
            })
            .sum::<f64>()
            / test_t.len() as f64;
        assert!(mse <= 0.05, "held-out MSE {mse} above 0.05");
    }

    #[test]
    fn out_of_range_target_rejected() {
        let features = vec![fused(vec![0.0; 4]); 3];
        let config = MlpConfig::regressor(4, 0);
        let err = train_regressor(&features, &[1.0, 10.5, 2.0], &config).unwrap_err();
        assert!(matches!(
            err,
            ModelError::TargetOutOfRange { index: 1, .. }
        ));
    }

    #[test]
    fn predict_score_clamps() {
        let make = |bias: f32| TrainedModelArtifact {
            model_kind: ModelKind::MlpRegressor,
            config: ModelConfigSnapshot::Mlp(MlpConfig::regressor(2, 0)),
            backends: BackendBindings::default(),
            pooling: crate::embedding::PoolingMethod::Mean,
            threshold: 7.0,
            format_version: 1,
            params: ModelParams::Mlp(MlpParams {
                head: MlpHead::Regressor,
                layers: vec![DenseParams {
                    in_dim: 2,
                    out_dim: 1,
                    weights: vec![0.0, 0.0],
                    bias: vec![bias],
                }],
            }),
        };
        let x = fused(vec![1.0, 1.0]);
        assert_eq!(predict_score(&make(11.3), &x).unwrap(), 10.0);
        assert_eq!(predict_score(&make(-0.2), &x).unwrap(), 0.0);
        let raw = predict_score(&make(4.7), &x).unwrap();
        assert!((raw - 4.7).abs() < 1e-6);
    }

    #[test]
    fn dim_and_kind_mismatches_rejected() {
        let (features, labels) = separable_set(20, 8);
        let config = MlpConfig {
            hidden_dims: vec![4],
            epochs: 2,
            ..MlpConfig::binary(8, 1)
        };
        let (artifact, _) = train_binary_classifier(&features, &labels, &config).unwrap();
        assert!(matches!(
            predict_alert(&artifact, &fused(vec![0.0; 9])),
            Err(ModelError::DimMismatch { .. })
        ));
        assert!(matches!(
            predict_score(&artifact, &fused(vec![0.0; 8])),
            Err(ModelError::KindMismatch { .. })
        ));
    }
}
