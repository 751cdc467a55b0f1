//! Metrics, seeded k-fold assignment, and cross-validation.
//!
//! `HIGH_ALERT` is the positive class everywhere. F1 follows the 0/0 -> 0
//! convention so degenerate folds stay visible instead of poisoning the
//! report with NaNs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AlertLabel;
use crate::embedding::EmbeddingVector;
use crate::hash::seed_for;
use crate::models::{
    predict_alert, predict_score, svm_predict, train_binary_classifier, train_svm, MlpConfig,
    ModelError, ModelKind, SvmConfig, TrainedModelArtifact,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("inputs have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("confusion matrix has zero total count")]
    EmptyMatrix,
    #[error("k must be at least 2, got {k}")]
    KTooSmall { k: usize },
    #[error("k ({k}) exceeds the number of samples ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("duplicate video_id \"{0}\"")]
    DuplicateId(String),
    #[error("video_id \"{0}\" is not in the fold assignment")]
    UnknownId(String),
    #[error("fold assignment covers {expected} ids, got {actual} samples")]
    AssignmentMismatch { expected: usize, actual: usize },
    #[error("every fold was skipped; no metrics to aggregate")]
    AllFoldsSkipped,
    #[error("artifact kind {kind} does not match the supplied targets")]
    DataKindMismatch { kind: ModelKind },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Binary confusion counts with `HIGH_ALERT` positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_pos: usize,
    #[serde(rename = "fp")]
    pub false_pos: usize,
    #[serde(rename = "tn")]
    pub true_neg: usize,
    #[serde(rename = "fn")]
    pub false_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        match self.total() {
            0 => Err(EvalError::EmptyMatrix),
            total => Ok((self.true_pos + self.true_neg) as f64 / total as f64),
        }
    }

    /// `tp / (tp + fp)`, 0 when undefined.
    pub fn precision(&self) -> Result<f64, EvalError> {
        if self.total() == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        Ok(match self.true_pos + self.false_pos {
            0 => 0.0,
            d => self.true_pos as f64 / d as f64,
        })
    }

    /// `tp / (tp + fn)`, 0 when undefined.
    pub fn recall(&self) -> Result<f64, EvalError> {
        if self.total() == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        Ok(match self.true_pos + self.false_neg {
            0 => 0.0,
            d => self.true_pos as f64 / d as f64,
        })
    }

    /// Harmonic mean of precision and recall, 0 when undefined.
    pub fn f1(&self) -> Result<f64, EvalError> {
        let p = self.precision()?;
        let r = self.recall()?;
        Ok(if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        })
    }
}

/// Tallies predictions against ground truth.
pub fn confusion(
    truth: &[AlertLabel],
    predicted: &[AlertLabel],
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (AlertLabel::HighAlert, AlertLabel::HighAlert) => cm.true_pos += 1,
            (AlertLabel::NoAlert, AlertLabel::HighAlert) => cm.false_pos += 1,
            (AlertLabel::NoAlert, AlertLabel::NoAlert) => cm.true_neg += 1,
            (AlertLabel::HighAlert, AlertLabel::NoAlert) => cm.false_neg += 1,
        }
    }
    Ok(cm)
}

fn check_pairs(pred: &[f64], truth: &[f64]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pairs(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean squared error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pairs(pred, truth)?;
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// All metrics computed for one evaluated set. Classification metrics are
/// present iff labels were evaluated; regression metrics iff scores were.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

impl MetricsBundle {
    pub fn classification(cm: ConfusionMatrix) -> Result<Self, EvalError> {
        Ok(MetricsBundle {
            accuracy: Some(cm.accuracy()?),
            f1: Some(cm.f1()?),
            mae: None,
            mse: None,
            n: cm.total(),
            confusion: Some(cm),
        })
    }

    pub fn regression(pred: &[f64], truth: &[f64]) -> Result<Self, EvalError> {
        Ok(MetricsBundle {
            accuracy: None,
            f1: None,
            mae: Some(mae(pred, truth)?),
            mse: Some(mse(pred, truth)?),
            n: pred.len(),
            confusion: None,
        })
    }
}

/// Seeded assignment of every id to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
    pub seed: u64,
}

impl FoldAssignment {
    /// Ids in fold `f`, in id order.
    pub fn fold_ids(&self, fold: usize) -> Vec<&String> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id)
            .collect()
    }
}

/// Shuffles the ids with the seed, then deals them round-robin into `k`
/// folds, so fold sizes differ by at most one.
pub fn assign_folds(ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::KTooSmall { k });
    }
    if k > ids.len() {
        return Err(EvalError::KTooLarge { k, n: ids.len() });
    }
    let mut fold_of = BTreeMap::new();
    let mut perm: Vec<usize> = (0..ids.len()).collect();
    let mut rng = ChaCha8Rng::from_seed(seed_for(seed, "fold-assign"));
    perm.shuffle(&mut rng);
    for (slot, &i) in perm.iter().enumerate() {
        if fold_of.insert(ids[i].clone(), slot % k).is_some() {
            return Err(EvalError::DuplicateId(ids[i].clone()));
        }
    }
    Ok(FoldAssignment { k, fold_of, seed })
}

/// Model trained inside each cross-validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CvModelConfig {
    Svm(SvmConfig),
    Mlp(MlpConfig),
}

/// One fold's outcome: metrics, or the reason it was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub fold: usize,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_reason: Option<String>,
}

/// Per-fold metrics plus the accuracy aggregate across evaluated folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldRow>,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

/// Trains on every fold except `fold` and evaluates on `fold`.
///
/// A training union with a single class yields a skipped row rather than
/// an error, so one degenerate fold cannot abort a whole run.
pub fn train_eval_fold(
    fold: usize,
    ids: &[String],
    features: &[EmbeddingVector],
    labels: &[AlertLabel],
    assignment: &FoldAssignment,
    model: &CvModelConfig,
) -> Result<FoldRow, EvalError> {
    let mut train_f = Vec::new();
    let mut train_l = Vec::new();
    let mut test_f = Vec::new();
    let mut test_l = Vec::new();
    for ((id, f), &l) in ids.iter().zip(features).zip(labels) {
        let &sample_fold = assignment
            .fold_of
            .get(id)
            .ok_or_else(|| EvalError::UnknownId(id.clone()))?;
        if sample_fold == fold {
            test_f.push(f.clone());
            test_l.push(l);
        } else {
            train_f.push(f.clone());
            train_l.push(l);
        }
    }

    let trained = match model {
        CvModelConfig::Svm(config) => train_svm(&train_f, &train_l, config),
        CvModelConfig::Mlp(config) => {
            train_binary_classifier(&train_f, &train_l, config).map(|(artifact, _)| artifact)
        }
    };
    let artifact = match trained {
        Ok(a) => a,
        Err(ModelError::SingleClass) => {
            return Ok(FoldRow {
                fold,
                n_test: test_l.len(),
                metrics: None,
                skipped_reason: Some("training union contains a single class".into()),
            });
        }
        Err(e) => return Err(e.into()),
    };

    let mut predicted = Vec::with_capacity(test_l.len());
    for f in &test_f {
        let label = match model {
            CvModelConfig::Svm(_) => svm_predict(&artifact, f)?.0,
            CvModelConfig::Mlp(_) => predict_alert(&artifact, f)?.0,
        };
        predicted.push(label);
    }
    let cm = confusion(&test_l, &predicted)?;
    Ok(FoldRow {
        fold,
        n_test: test_l.len(),
        metrics: Some(MetricsBundle::classification(cm)?),
        skipped_reason: None,
    })
}

/// Runs the full k-fold protocol: for each fold, train on the other k-1
/// folds and evaluate on it, then aggregate accuracies.
pub fn run_cross_validation(
    ids: &[String],
    features: &[EmbeddingVector],
    labels: &[AlertLabel],
    assignment: &FoldAssignment,
    model: &CvModelConfig,
) -> Result<CrossValidationReport, EvalError> {
    if ids.len() != features.len() || ids.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: ids.len(),
            right: features.len().max(labels.len()),
        });
    }
    if assignment.fold_of.len() != ids.len() {
        return Err(EvalError::AssignmentMismatch {
            expected: assignment.fold_of.len(),
            actual: ids.len(),
        });
    }

    let folds: Vec<FoldRow> = (0..assignment.k)
        .map(|fold| train_eval_fold(fold, ids, features, labels, assignment, model))
        .collect::<Result<_, _>>()?;
    summarize_folds(assignment.k, assignment.seed, folds)
}

/// Aggregates fold rows into a report (mean/min/max over evaluated folds).
pub fn summarize_folds(
    k: usize,
    seed: u64,
    folds: Vec<FoldRow>,
) -> Result<CrossValidationReport, EvalError> {
    let accuracies: Vec<f64> = folds
        .iter()
        .filter_map(|row| row.metrics.as_ref().and_then(|m| m.accuracy))
        .collect();
    if accuracies.is_empty() {
        return Err(EvalError::AllFoldsSkipped);
    }
    let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let min_accuracy = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    let max_accuracy = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CrossValidationReport {
        k,
        seed,
        folds,
        mean_accuracy,
        min_accuracy,
        max_accuracy,
    })
}

/// Targets for a held-out evaluation.
pub enum EvalTargets<'a> {
    Labels(&'a [AlertLabel]),
    Scores(&'a [f64]),
}

/// Evaluates a trained artifact on a held-out set, producing the metric
/// bundle matching the artifact's kind.
pub fn evaluate_framework(
    artifact: &TrainedModelArtifact,
    features: &[EmbeddingVector],
    targets: &EvalTargets,
) -> Result<MetricsBundle, EvalError> {
    match (artifact.model_kind, targets) {
        (ModelKind::MlpBinary, EvalTargets::Labels(labels)) => {
            check_feature_targets(features.len(), labels.len())?;
            let predicted: Vec<AlertLabel> = features
                .iter()
                .map(|f| predict_alert(artifact, f).map(|(l, _)| l))
                .collect::<Result<_, _>>()?;
            MetricsBundle::classification(confusion(labels, &predicted)?)
        }
        (ModelKind::Svm, EvalTargets::Labels(labels)) => {
            check_feature_targets(features.len(), labels.len())?;
            let predicted: Vec<AlertLabel> = features
                .iter()
                .map(|f| svm_predict(artifact, f).map(|(l, _)| l))
                .collect::<Result<_, _>>()?;
            MetricsBundle::classification(confusion(labels, &predicted)?)
        }
        (ModelKind::MlpRegressor, EvalTargets::Scores(truth)) => {
            check_feature_targets(features.len(), truth.len())?;
            let predicted: Vec<f64> = features
                .iter()
                .map(|f| predict_score(artifact, f))
                .collect::<Result<_, _>>()?;
            MetricsBundle::regression(&predicted, truth)
        }
        (kind, _) => Err(EvalError::DataKindMismatch { kind }),
    }
}

fn check_feature_targets(features: usize, targets: usize) -> Result<(), EvalError> {
    if features != targets {
        return Err(EvalError::LengthMismatch {
            left: features,
            right: targets,
        });
    }
    if features == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingBackend, EmbeddingKind, MockBackend, Modality};
    use rand::Rng;

    use AlertLabel::{HighAlert, NoAlert};

    #[test]
    fn perfect_predictions() {
        let truth = vec![HighAlert, HighAlert, HighAlert, NoAlert, NoAlert];
        let cm = confusion(&truth, &truth).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                true_pos: 3,
                false_pos: 0,
                true_neg: 2,
                false_neg: 0
            }
        );
        assert_eq!(cm.accuracy().unwrap(), 1.0);
        assert_eq!(cm.f1().unwrap(), 1.0);
    }

    #[test]
    fn inverted_predictions() {
        let truth = vec![HighAlert, HighAlert, HighAlert, NoAlert, NoAlert];
        let pred = vec![NoAlert, NoAlert, NoAlert, HighAlert, HighAlert];
        let cm = confusion(&truth, &pred).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                true_pos: 0,
                false_pos: 2,
                true_neg: 0,
                false_neg: 3
            }
        );
    }

    #[test]
    fn confusion_matches_naive_tally_on_random_pairs() {
        let mut rng = ChaCha8Rng::from_seed([3u8; 32]);
        let draw = |rng: &mut ChaCha8Rng| {
            if rng.random::<bool>() {
                HighAlert
            } else {
                NoAlert
            }
        };
        let truth: Vec<AlertLabel> = (0..1000).map(|_| draw(&mut rng)).collect();
        let pred: Vec<AlertLabel> = (0..1000).map(|_| draw(&mut rng)).collect();
        let cm = confusion(&truth, &pred).unwrap();

        // Independent tally.
        let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
        for i in 0..truth.len() {
            if truth[i] == HighAlert && pred[i] == HighAlert {
                tp += 1;
            }
            if truth[i] == NoAlert && pred[i] == HighAlert {
                fp += 1;
            }
            if truth[i] == NoAlert && pred[i] == NoAlert {
                tn += 1;
            }
            if truth[i] == HighAlert && pred[i] == NoAlert {
                fneg += 1;
            }
        }
        assert_eq!((cm.true_pos, cm.false_pos, cm.true_neg, cm.false_neg), (tp, fp, tn, fneg));
        assert_eq!(cm.total(), 1000);
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(matches!(
            confusion(&[HighAlert], &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(confusion(&[], &[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn degenerate_positive_class_f1_is_zero() {
        let cm = ConfusionMatrix {
            true_pos: 0,
            false_pos: 0,
            true_neg: 7,
            false_neg: 3,
        };
        assert_eq!(cm.f1().unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_metrics() {
        // acc = 7/10; p = 3/4, r = 3/5, f1 = 2*0.75*0.6/1.35 = 2/3.
        let cm = ConfusionMatrix {
            true_pos: 3,
            false_pos: 1,
            true_neg: 4,
            false_neg: 2,
        };
        assert!((cm.accuracy().unwrap() - 0.7).abs() < 1e-12);
        assert!((cm.f1().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mae_mse_basics() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mse(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(mae(&[], &[]), Err(EvalError::EmptyInput)));
        assert!(matches!(
            mse(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mae_mse_match_loop_oracle() {
        let mut rng = ChaCha8Rng::from_seed([8u8; 32]);
        let pred: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let truth: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
        for i in 0..100 {
            abs_sum += (pred[i] - truth[i]).abs();
            sq_sum += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        }
        assert!((mae(&pred, &truth).unwrap() - abs_sum / 100.0).abs() < 1e-9);
        assert!((mse(&pred, &truth).unwrap() - sq_sum / 100.0).abs() < 1e-9);
    }

    fn make_ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i:03}")).collect()
    }

    #[test]
    fn hundred_ids_ten_folds_of_ten() {
        let ids = make_ids(100);
        let assignment = assign_folds(&ids, 10, 5).unwrap();
        for fold in 0..10 {
            assert_eq!(assignment.fold_ids(fold).len(), 10);
        }
    }

    #[test]
    fn fold_assignment_is_deterministic() {
        let ids = make_ids(30);
        assert_eq!(
            assign_folds(&ids, 5, 77).unwrap(),
            assign_folds(&ids, 5, 77).unwrap()
        );
        assert_ne!(
            assign_folds(&ids, 5, 77).unwrap(),
            assign_folds(&ids, 5, 78).unwrap()
        );
    }

    #[test]
    fn remainder_spreads_across_leading_folds() {
        let ids = make_ids(10);
        let assignment = assign_folds(&ids, 3, 1).unwrap();
        let sizes: Vec<usize> = (0..3).map(|f| assignment.fold_ids(f).len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
    }

    #[test]
    fn fold_bounds_checked() {
        let ids = make_ids(5);
        assert!(matches!(
            assign_folds(&ids, 1, 0),
            Err(EvalError::KTooSmall { .. })
        ));
        assert!(matches!(
            assign_folds(&ids, 6, 0),
            Err(EvalError::KTooLarge { .. })
        ));
    }

    /// Mock text embeddings with a planted class signal, labels aligned.
    fn separable_text_set(n: usize) -> (Vec<String>, Vec<EmbeddingVector>, Vec<AlertLabel>) {
        let backend = MockBackend::new(Modality::Text, 24, 31).with_class_signal(1.0);
        let ids = make_ids(n);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = (i % 2) as u8;
            let values = backend
                .embed(format!("scene {i} marker {class}").as_bytes())
                .unwrap();
            features.push(EmbeddingVector::new(values, EmbeddingKind::Text).unwrap());
            labels.push(if class == 1 { HighAlert } else { NoAlert });
        }
        (ids, features, labels)
    }

    #[test]
    fn cross_validation_on_separable_data() {
        let (ids, features, labels) = separable_text_set(100);
        let assignment = assign_folds(&ids, 10, 4).unwrap();
        let model = CvModelConfig::Svm(SvmConfig::rbf(4));
        let report = run_cross_validation(&ids, &features, &labels, &assignment, &model).unwrap();

        assert_eq!(report.folds.len(), 10);
        assert!(report.mean_accuracy >= 0.9, "mean {}", report.mean_accuracy);

        // Every sample is tested exactly once.
        let tested: usize = report.folds.iter().map(|r| r.n_test).sum();
        assert_eq!(tested, 100);

        // With fold size 10, each fold accuracy is a multiple of 0.1.
        for row in &report.folds {
            let acc = row.metrics.as_ref().unwrap().accuracy.unwrap();
            let scaled = acc * row.n_test as f64;
            assert!(
                (scaled - scaled.round()).abs() < 1e-9,
                "fold accuracy {acc} is not a multiple of 1/{}",
                row.n_test
            );
        }

        // The reported mean equals the recomputed mean of fold accuracies.
        let recomputed: f64 = report
            .folds
            .iter()
            .map(|r| r.metrics.as_ref().unwrap().accuracy.unwrap())
            .sum::<f64>()
            / 10.0;
        assert!((report.mean_accuracy - recomputed).abs() < 1e-12);
        assert!(report.min_accuracy <= report.mean_accuracy);
        assert!(report.max_accuracy >= report.mean_accuracy);
    }

    #[test]
    fn label_flip_mirrors_per_fold_accuracy() {
        // The SVM is symmetric under class renaming, so retraining with
        // flipped labels reproduces each fold's accuracy exactly.
        let (ids, features, labels) = separable_text_set(40);
        let flipped: Vec<AlertLabel> = labels
            .iter()
            .map(|&l| if l == HighAlert { NoAlert } else { HighAlert })
            .collect();
        let assignment = assign_folds(&ids, 5, 9).unwrap();
        let model = CvModelConfig::Svm(SvmConfig::rbf(9));
        let a = run_cross_validation(&ids, &features, &labels, &assignment, &model).unwrap();
        let b = run_cross_validation(&ids, &features, &flipped, &assignment, &model).unwrap();
        for (ra, rb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(
                ra.metrics.as_ref().unwrap().accuracy,
                rb.metrics.as_ref().unwrap().accuracy,
                "fold {} accuracy must mirror under label flip",
                ra.fold
            );
        }
    }

    #[test]
    fn degenerate_fold_is_skipped_and_run_continues() {
        // One positive sample: the fold holding it trains single-class.
        let (ids, features, _) = separable_text_set(6);
        let mut labels = vec![NoAlert; 6];
        labels[0] = HighAlert;
        let assignment = assign_folds(&ids, 3, 2).unwrap();
        let model = CvModelConfig::Svm(SvmConfig::rbf(2));
        let report = run_cross_validation(&ids, &features, &labels, &assignment, &model).unwrap();
        let skipped = report
            .folds
            .iter()
            .filter(|r| r.skipped_reason.is_some())
            .count();
        assert_eq!(skipped, 1, "exactly the positive sample's fold skips");
        assert_eq!(report.folds.len(), 3);
    }

    #[test]
    fn evaluate_framework_classifier_and_regressor() {
        use crate::models::{
            BackendBindings, DenseParams, MlpHead, MlpParams, ModelConfigSnapshot, ModelParams,
        };
        // Constant regressor predicting the target mean: MSE equals the
        // population variance of the targets.
        let targets = vec![2.0, 4.0, 9.0, 5.0];
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let artifact = TrainedModelArtifact {
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
                    bias: vec![mean as f32],
                }],
            }),
        };
        let features: Vec<EmbeddingVector> = (0..4)
            .map(|i| {
                EmbeddingVector::new(vec![i as f32, -(i as f32)], EmbeddingKind::Fused).unwrap()
            })
            .collect();
        let bundle =
            evaluate_framework(&artifact, &features, &EvalTargets::Scores(&targets)).unwrap();
        let variance =
            targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / targets.len() as f64;
        let got = bundle.mse.unwrap();
        // The bias is quantized to f32, so allow that rounding.
        assert!(
            (got - variance).abs() < 1e-6,
            "mse {got} vs variance {variance}"
        );
        assert!(bundle.accuracy.is_none() && bundle.confusion.is_none());

        // Kind mismatch: regressor artifact with labels.
        let labels = vec![HighAlert; 4];
        assert!(matches!(
            evaluate_framework(&artifact, &features, &EvalTargets::Labels(&labels)),
            Err(EvalError::DataKindMismatch { .. })
        ));
    }

    #[test]
    fn bundle_serialization_round_trip() {
        let cm = ConfusionMatrix {
            true_pos: 3,
            false_pos: 1,
            true_neg: 4,
            false_neg: 2,
        };
        let bundle = MetricsBundle::classification(cm).unwrap();
        let json = serde_json::to_string(&bundle).unwrap();
        let back: MetricsBundle = serde_json::from_str(&json).unwrap();
        assert_eq!(bundle, back);
        assert!(json.contains("\"tp\":3"), "json: {json}");
    }
}
