//! Manifest ingestion, rating aggregation, alert labels, and dataset splits.
//!
//! A dataset manifest is UTF-8 text with one JSON record per line. Each
//! record describes one video:
//!
//! ```json
//! {"video_id": "v001", "media_path": "clips/v001.vraw", "summary": "...",
//!  "ratings": [7, 8, 6, ...], "segment_start_frame": 120,
//!  "segment_end_frame": 480, "fps": 30.0}
//! ```
//!
//! `fps` is optional. Unknown keys are rejected in strict mode and reported
//! as warnings otherwise. Loading is pure: the same file bytes always
//! produce the same entries.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::seed_for;

/// Rating threshold separating `NO_ALERT` from `HIGH_ALERT`.
pub const DEFAULT_ALERT_THRESHOLD: f64 = 7.0;

/// One video's manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifestEntry {
    pub video_id: String,
    pub media_path: PathBuf,
    pub summary: String,
    /// Per-evaluator integer scores, each in `0..=10`.
    pub ratings: Vec<u8>,
    pub segment_start_frame: u64,
    pub segment_end_frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

/// A loaded manifest plus any non-fatal warnings gathered while parsing.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub entries: Vec<VideoManifestEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key \"{key}\"")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: video \"{video_id}\": rating out of range: {rating} (expected 0..=10)")]
    RatingOutOfRange {
        line: usize,
        video_id: String,
        rating: i64,
    },
    #[error("line {line}: video \"{video_id}\": ratings list is empty")]
    EmptyRatings { line: usize, video_id: String },
    #[error(
        "line {line}: video \"{video_id}\": inverted segment: start {start} > end {end}"
    )]
    InvertedSegment {
        line: usize,
        video_id: String,
        start: u64,
        end: u64,
    },
    #[error("line {line}: video \"{video_id}\": fps must be positive and finite, got {fps}")]
    InvalidFps {
        line: usize,
        video_id: String,
        fps: f64,
    },
    #[error("line {line}: duplicate video_id \"{video_id}\"")]
    DuplicateId { line: usize, video_id: String },
}

const KNOWN_KEYS: [&str; 7] = [
    "video_id",
    "media_path",
    "summary",
    "ratings",
    "segment_start_frame",
    "segment_end_frame",
    "fps",
];

/// Loads a line-delimited manifest, ignoring unknown keys with a warning.
pub fn load_manifest(path: &Path) -> Result<LoadedManifest, ManifestError> {
    load_manifest_opts(path, false)
}

/// Loads a line-delimited manifest, rejecting unknown keys.
pub fn load_manifest_strict(path: &Path) -> Result<LoadedManifest, ManifestError> {
    load_manifest_opts(path, true)
}

fn load_manifest_opts(path: &Path, strict: bool) -> Result<LoadedManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw_line).map_err(|e| ManifestError::Parse {
                line,
                message: e.to_string(),
            })?;
        let serde_json::Value::Object(mut map) = value else {
            return Err(ManifestError::Parse {
                line,
                message: "record is not a JSON object".into(),
            });
        };

        let unknown: Vec<String> = map
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
        for key in unknown {
            if strict {
                return Err(ManifestError::UnknownKey { line, key });
            }
            warnings.push(format!("line {line}: ignoring unknown key \"{key}\""));
            map.remove(&key);
        }

        let raw: RawEntry = serde_json::from_value(serde_json::Value::Object(map)).map_err(
            |e| ManifestError::Parse {
                line,
                message: e.to_string(),
            },
        )?;
        let entry = validate_entry(raw, line)?;

        if !seen_ids.insert(entry.video_id.clone()) {
            return Err(ManifestError::DuplicateId {
                line,
                video_id: entry.video_id,
            });
        }
        entries.push(entry);
    }

    Ok(LoadedManifest { entries, warnings })
}

#[derive(Deserialize)]
struct RawEntry {
    video_id: String,
    media_path: PathBuf,
    summary: String,
    ratings: Vec<i64>,
    segment_start_frame: u64,
    segment_end_frame: u64,
    #[serde(default)]
    fps: Option<f64>,
}

fn validate_entry(raw: RawEntry, line: usize) -> Result<VideoManifestEntry, ManifestError> {
    if raw.ratings.is_empty() {
        return Err(ManifestError::EmptyRatings {
            line,
            video_id: raw.video_id,
        });
    }
    let mut ratings = Vec::with_capacity(raw.ratings.len());
    for &r in &raw.ratings {
        if !(0..=10).contains(&r) {
            return Err(ManifestError::RatingOutOfRange {
                line,
                video_id: raw.video_id,
                rating: r,
            });
        }
        ratings.push(r as u8);
    }
    if raw.segment_start_frame > raw.segment_end_frame {
        return Err(ManifestError::InvertedSegment {
            line,
            video_id: raw.video_id,
            start: raw.segment_start_frame,
            end: raw.segment_end_frame,
        });
    }
    if let Some(fps) = raw.fps {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(ManifestError::InvalidFps {
                line,
                video_id: raw.video_id,
                fps,
            });
        }
    }
    Ok(VideoManifestEntry {
        video_id: raw.video_id,
        media_path: raw.media_path,
        summary: raw.summary,
        ratings,
        segment_start_frame: raw.segment_start_frame,
        segment_end_frame: raw.segment_end_frame,
        fps: raw.fps,
    })
}

/// Writes entries back out in the line-delimited manifest format.
pub fn write_manifest(path: &Path, entries: &[VideoManifestEntry]) -> std::io::Result<()> {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("manifest entry serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// How per-evaluator scores collapse into one rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingAggregation {
    Mean,
    Median,
}

/// Where a [`DangerRating`] value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingSource {
    AggregatedMean,
    AggregatedMedian,
    ProvidedScalar,
}

/// A scalar danger rating in `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DangerRating {
    pub value: f64,
    pub source: RatingSource,
}

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("ratings list is empty")]
    Empty,
    #[error("rating value {0} outside [0, 10]")]
    OutOfRange(f64),
}

impl DangerRating {
    /// Wraps an externally supplied scalar rating.
    pub fn provided(value: f64) -> Result<Self, RatingError> {
        if !(value.is_finite() && (0.0..=10.0).contains(&value)) {
            return Err(RatingError::OutOfRange(value));
        }
        Ok(DangerRating {
            value,
            source: RatingSource::ProvidedScalar,
        })
    }
}

/// Aggregates evaluator scores with the arithmetic mean.
pub fn aggregate_rating(ratings: &[u8]) -> Result<DangerRating, RatingError> {
    aggregate_rating_with(ratings, RatingAggregation::Mean)
}

/// Aggregates evaluator scores with the given method.
pub fn aggregate_rating_with(
    ratings: &[u8],
    method: RatingAggregation,
) -> Result<DangerRating, RatingError> {
    if ratings.is_empty() {
        return Err(RatingError::Empty);
    }
    let (value, source) = match method {
        RatingAggregation::Mean => {
            let sum: u64 = ratings.iter().map(|&r| r as u64).sum();
            (sum as f64 / ratings.len() as f64, RatingSource::AggregatedMean)
        }
        RatingAggregation::Median => {
            let mut sorted = ratings.to_vec();
            sorted.sort_unstable();
            let n = sorted.len();
            let value = if n % 2 == 1 {
                sorted[n / 2] as f64
            } else {
                (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
            };
            (value, RatingSource::AggregatedMedian)
        }
    };
    Ok(DangerRating { value, source })
}

/// Binary alert category derived from a danger rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertLabel {
    NoAlert,
    HighAlert,
}

impl std::fmt::Display for AlertLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlertLabel::NoAlert => write!(f, "no_alert"),
            AlertLabel::HighAlert => write!(f, "high_alert"),
        }
    }
}

/// `HIGH_ALERT` iff the rating reaches the threshold.
pub fn to_alert_label(rating: &DangerRating, threshold: f64) -> AlertLabel {
    if rating.value >= threshold {
        AlertLabel::HighAlert
    } else {
        AlertLabel::NoAlert
    }
}

/// A seeded train/test partition of video ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub test_fraction: f64,
    pub stratified: bool,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("ids and labels have different lengths ({ids} vs {labels})")]
    LengthMismatch { ids: usize, labels: usize },
    #[error("duplicate video_id \"{0}\" in split input")]
    DuplicateId(String),
    #[error("test_fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("test_fraction {fraction} over {n} samples yields an empty {side} set")]
    EmptySide {
        fraction: f64,
        n: usize,
        side: &'static str,
    },
}

/// Partitions `ids` into train/test sets with a seeded shuffle.
///
/// `|test| = round(test_fraction * N)`. When `stratified`, per-class test
/// counts follow the largest-remainder rule, so each class's share of the
/// test set matches `test_fraction` up to one sample.
pub fn make_split(
    ids: &[String],
    labels: &[AlertLabel],
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<DatasetSplit, SplitError> {
    if ids.len() != labels.len() {
        return Err(SplitError::LengthMismatch {
            ids: ids.len(),
            labels: labels.len(),
        });
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(SplitError::DuplicateId(id.clone()));
        }
    }
    if !(test_fraction.is_finite() && 0.0 < test_fraction && test_fraction < 1.0) {
        return Err(SplitError::InvalidFraction(test_fraction));
    }

    let n = ids.len();
    let test_count = (test_fraction * n as f64).round() as usize;
    if test_count == 0 {
        return Err(SplitError::EmptySide {
            fraction: test_fraction,
            n,
            side: "test",
        });
    }
    if test_count >= n {
        return Err(SplitError::EmptySide {
            fraction: test_fraction,
            n,
            side: "train",
        });
    }

    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::from_seed(seed_for(seed, "dataset-split"));
    perm.shuffle(&mut rng);

    let test_indices: HashSet<usize> = if stratified {
        stratified_test_indices(&perm, labels, test_count)
    } else {
        perm.iter().take(test_count).copied().collect()
    };

    let mut train_ids = Vec::with_capacity(n - test_count);
    let mut test_ids = Vec::with_capacity(test_count);
    for &i in &perm {
        if test_indices.contains(&i) {
            test_ids.push(ids[i].clone());
        } else {
            train_ids.push(ids[i].clone());
        }
    }

    Ok(DatasetSplit {
        train_ids,
        test_ids,
        seed,
        test_fraction,
        stratified,
    })
}

/// Largest-remainder allocation of the test quota across classes, then a
/// walk over the shuffled order filling each class's quota.
fn stratified_test_indices(
    perm: &[usize],
    labels: &[AlertLabel],
    test_count: usize,
) -> HashSet<usize> {
    const CLASS_ORDER: [AlertLabel; 2] = [AlertLabel::NoAlert, AlertLabel::HighAlert];

    let n = labels.len();
    let class_sizes: Vec<usize> = CLASS_ORDER
        .iter()
        .map(|c| labels.iter().filter(|&&l| l == *c).count())
        .collect();

    let mut quotas: Vec<usize> = Vec::with_capacity(2);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(2);
    for (ci, &size) in class_sizes.iter().enumerate() {
        let exact = test_count as f64 * size as f64 / n as f64;
        let floor = exact.floor() as usize;
        quotas.push(floor);
        remainders.push((exact - floor as f64, ci));
    }
    let assigned: usize = quotas.iter().sum();
    // Hand out the leftover slots by descending fractional remainder; ties
    // break by class order for determinism.
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for k in 0..test_count.saturating_sub(assigned) {
        let (_, ci) = remainders[k % remainders.len()];
        quotas[ci] += 1;
    }

    let mut remaining = quotas;
    let mut picked = HashSet::with_capacity(test_count);
    for &i in perm {
        let ci = CLASS_ORDER.iter().position(|c| *c == labels[i]).unwrap();
        if remaining[ci] > 0 {
            remaining[ci] -= 1;
            picked.insert(i);
        }
    }
    picked
}
