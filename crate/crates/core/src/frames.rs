//! Deterministic frame selection inside annotated temporal segments.
//!
//! Sampling picks `count` equally spaced indices covering the segment
//! (endpoints included). Decoding goes through [`FrameSource`] so the
//! pipeline never depends on a specific container or codec: tests use
//! [`SyntheticFrameSource`], deployments use [`RawVideoFile`] or their own
//! implementation.

use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::derive_seed;

/// Inclusive frame interval where the annotated danger concentrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalSegment {
    pub start_frame: u64,
    pub end_frame: u64,
}

impl TemporalSegment {
    pub fn new(start_frame: u64, end_frame: u64) -> Result<Self, FrameError> {
        if start_frame > end_frame {
            return Err(FrameError::InvertedSegment {
                start: start_frame,
                end: end_frame,
            });
        }
        Ok(TemporalSegment {
            start_frame,
            end_frame,
        })
    }

    /// Number of frames in the segment (inclusive bounds, so at least 1).
    pub fn frame_span(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }
}

/// The frame indices selected for one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePlan {
    pub video_id: String,
    pub indices: Vec<u64>,
    pub count: usize,
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("inverted segment: start {start} > end {end}")]
    InvertedSegment { start: u64, end: u64 },
    #[error("frame count must be at least 1")]
    ZeroCount,
    #[error("video \"{video_id}\": frame index {index} out of range (source has {frame_count} frames)")]
    IndexOutOfRange {
        video_id: String,
        index: u64,
        frame_count: u64,
    },
    #[error("video \"{video_id}\": decode failed at frame {index}: {message}")]
    Decode {
        video_id: String,
        index: u64,
        message: String,
    },
    #[error("failed to open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a raw video file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported raw video version {version}")]
    UnsupportedVersion { path: PathBuf, version: u16 },
    #[error("{path}: truncated raw video file")]
    Truncated { path: PathBuf },
}

/// Selects `count` equally spaced indices covering `segment`, endpoints
/// included.
///
/// For `count >= 2` the indices are
/// `start + round(i * (end - start) / (count - 1))`. Segments shorter than
/// `count` yield repeated indices from the same formula, so the plan width
/// is fixed regardless of segment length.
pub fn sample_indices(
    video_id: &str,
    segment: TemporalSegment,
    count: usize,
) -> Result<FramePlan, FrameError> {
    if count == 0 {
        return Err(FrameError::ZeroCount);
    }
    let start = segment.start_frame;
    let span = (segment.end_frame - segment.start_frame) as f64;
    let indices: Vec<u64> = if count == 1 {
        vec![start]
    } else {
        (0..count)
            .map(|i| start + (i as f64 * span / (count - 1) as f64).round() as u64)
            .collect()
    };
    Ok(FramePlan {
        video_id: video_id.to_string(),
        indices,
        count,
    })
}

/// Height x width x 3 interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(
            pixels.len(),
            width as usize * height as usize * 3,
            "pixel buffer must be width*height*3 bytes"
        );
        RawImage {
            width,
            height,
            pixels,
        }
    }

    /// Image content framed for an embedding backend: `width` and `height`
    /// as little-endian u32, then the raw RGB bytes.
    pub fn to_backend_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(8 + self.pixels.len());
        bytes.extend_from_slice(&self.width.to_le_bytes());
        bytes.extend_from_slice(&self.height.to_le_bytes());
        bytes.extend_from_slice(&self.pixels);
        bytes
    }
}

/// Abstract frame decoder. `decode` must be deterministic per
/// (source, index); a single handle is not required to support concurrent
/// calls.
pub trait FrameSource {
    fn frame_count(&self) -> u64;
    fn decode(&mut self, index: u64) -> Result<RawImage, FrameError>;
}

/// Decodes every planned frame, in plan order.
pub fn extract_frames(
    source: &mut dyn FrameSource,
    plan: &FramePlan,
) -> Result<Vec<RawImage>, FrameError> {
    let frame_count = source.frame_count();
    let mut images = Vec::with_capacity(plan.indices.len());
    for &index in &plan.indices {
        if index >= frame_count {
            return Err(FrameError::IndexOutOfRange {
                video_id: plan.video_id.clone(),
                index,
                frame_count,
            });
        }
        images.push(source.decode(index)?);
    }
    Ok(images)
}

/// Procedural frame source: pixels are a seeded pseudorandom function of
/// (seed, frame index), so any frame can be regenerated independently.
///
/// The last pixel byte of every frame is forced to `class_bit`, which lets
/// mock embedding backends inject a class signal into synthetic datasets.
#[derive(Debug, Clone)]
pub struct SyntheticFrameSource {
    frame_count: u64,
    width: u32,
    height: u32,
    seed: u64,
    class_bit: u8,
}

impl SyntheticFrameSource {
    pub fn new(frame_count: u64, width: u32, height: u32, seed: u64, class_bit: u8) -> Self {
        SyntheticFrameSource {
            frame_count,
            width,
            height,
            seed,
            class_bit,
        }
    }
}

impl FrameSource for SyntheticFrameSource {
    fn frame_count(&self) -> u64 {
        self.frame_count
    }

    fn decode(&mut self, index: u64) -> Result<RawImage, FrameError> {
        if index >= self.frame_count {
            return Err(FrameError::IndexOutOfRange {
                video_id: String::from("<synthetic>"),
                index,
                frame_count: self.frame_count,
            });
        }
        let mut rng = ChaCha8Rng::from_seed(derive_seed(&[
            b"synthetic-frame",
            &self.seed.to_le_bytes(),
            &index.to_le_bytes(),
        ]));
        let mut pixels = vec![0u8; self.width as usize * self.height as usize * 3];
        rng.fill_bytes(&mut pixels);
        if let Some(last) = pixels.last_mut() {
            *last = self.class_bit & 1;
        }
        Ok(RawImage::new(self.width, self.height, pixels))
    }
}

const RAW_VIDEO_MAGIC: &[u8; 4] = b"VRAW";
const RAW_VIDEO_VERSION: u16 = 1;

/// Uncompressed frame container: `"VRAW"` magic, u16 version, u32 width,
/// u32 height, u32 frame count (all little-endian), then frame_count
/// contiguous RGB8 frames. Produced by transcoding upstream of the
/// pipeline.
pub struct RawVideoFile {
    path: PathBuf,
    file: std::fs::File,
    width: u32,
    height: u32,
    frame_count: u32,
}

impl RawVideoFile {
    pub fn open(path: &Path) -> Result<Self, FrameError> {
        let mut file = std::fs::File::open(path).map_err(|source| FrameError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut header = [0u8; 18];
        file.read_exact(&mut header)
            .map_err(|_| FrameError::Truncated {
                path: path.to_path_buf(),
            })?;
        if &header[0..4] != RAW_VIDEO_MAGIC {
            return Err(FrameError::BadMagic {
                path: path.to_path_buf(),
            });
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != RAW_VIDEO_VERSION {
            return Err(FrameError::UnsupportedVersion {
                path: path.to_path_buf(),
                version,
            });
        }
        let width = u32::from_le_bytes(header[6..10].try_into().unwrap());
        let height = u32::from_le_bytes(header[10..14].try_into().unwrap());
        let frame_count = u32::from_le_bytes(header[14..18].try_into().unwrap());

        let frame_bytes = width as u64 * height as u64 * 3;
        let expected = 18 + frame_bytes * frame_count as u64;
        let actual = file
            .metadata()
            .map_err(|source| FrameError::Io {
                path: path.to_path_buf(),
                source,
            })?
            .len();
        if actual < expected {
            return Err(FrameError::Truncated {
                path: path.to_path_buf(),
            });
        }

        Ok(RawVideoFile {
            path: path.to_path_buf(),
            file,
            width,
            height,
            frame_count,
        })
    }

    /// Writes a raw video file from decoded frames (all the same size).
    pub fn write(path: &Path, width: u32, height: u32, frames: &[Vec<u8>]) -> std::io::Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(RAW_VIDEO_MAGIC)?;
        out.write_all(&RAW_VIDEO_VERSION.to_le_bytes())?;
        out.write_all(&width.to_le_bytes())?;
        out.write_all(&height.to_le_bytes())?;
        out.write_all(&(frames.len() as u32).to_le_bytes())?;
        for frame in frames {
            assert_eq!(frame.len(), width as usize * height as usize * 3);
            out.write_all(frame)?;
        }
        Ok(())
    }
}

impl FrameSource for RawVideoFile {
    fn frame_count(&self) -> u64 {
        self.frame_count as u64
    }

    fn decode(&mut self, index: u64) -> Result<RawImage, FrameError> {
        if index >= self.frame_count as u64 {
            return Err(FrameError::IndexOutOfRange {
                video_id: self.path.display().to_string(),
                index,
                frame_count: self.frame_count as u64,
            });
        }
        let frame_bytes = self.width as u64 * self.height as u64 * 3;
        let offset = 18 + index * frame_bytes;
        self.file
            .seek(SeekFrom::Start(offset))
            .map_err(|e| FrameError::Decode {
                video_id: self.path.display().to_string(),
                index,
                message: e.to_string(),
            })?;
        let mut pixels = vec![0u8; frame_bytes as usize];
        self.file
            .read_exact(&mut pixels)
            .map_err(|e| FrameError::Decode {
                video_id: self.path.display().to_string(),
                index,
                message: e.to_string(),
            })?;
        Ok(RawImage::new(self.width, self.height, pixels))
    }
}
