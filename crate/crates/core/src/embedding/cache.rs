//! Binary embedding cache (`.vemb`).
//!
//! Layout, all little-endian regardless of host:
//!
//! ```text
//! magic  "VEMB"          4 bytes ASCII
//! version u16            currently 1
//! kind    u8             0 = frame stack, 1 = video pooled, 2 = text, 3 = fused
//! dim     u32
//! count   u32            number of vectors (1 unless frame stack)
//! payload count*dim f32  row-major
//! crc32   u32            CRC-32 of the payload bytes
//! ```
//!
//! A sidecar metadata record (`<file>.meta`, one JSON line) carries the
//! video id and the backend that produced the vectors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EmbeddingKind, EmbeddingStack, EmbeddingVector};

const MAGIC: &[u8; 4] = b"VEMB";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic (not an embedding cache)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported cache version {version}")]
    UnsupportedVersion { path: PathBuf, version: u16 },
    #[error("{path}: truncated payload (expected {expected} bytes, found {actual})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: payload checksum mismatch")]
    ChecksumMismatch { path: PathBuf },
    #[error("{path}: invalid kind byte {kind}")]
    InvalidKind { path: PathBuf, kind: u8 },
    #[error("{path}: invalid header: {message}")]
    InvalidHeader { path: PathBuf, message: String },
    #[error("cached data is not a valid {expected}: {message}")]
    Contents {
        expected: &'static str,
        message: String,
    },
    #[error("{path}: sidecar is malformed: {message}")]
    Sidecar { path: PathBuf, message: String },
}

/// One cache file's contents: `count` vectors of `dim` f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedEmbedding {
    pub kind: EmbeddingKind,
    pub dim: u32,
    pub count: u32,
    /// Row-major values, `count * dim` entries.
    pub values: Vec<f32>,
}

impl CachedEmbedding {
    pub fn from_stack(stack: &EmbeddingStack) -> Self {
        let mut values = Vec::with_capacity(stack.len() * stack.dim());
        for v in stack.vectors() {
            values.extend_from_slice(v.values());
        }
        CachedEmbedding {
            kind: EmbeddingKind::Frame,
            dim: stack.dim() as u32,
            count: stack.len() as u32,
            values,
        }
    }

    pub fn from_vector(vector: &EmbeddingVector) -> Self {
        CachedEmbedding {
            kind: vector.kind(),
            dim: vector.dim() as u32,
            count: 1,
            values: vector.values().to_vec(),
        }
    }

    /// Rebuilds a frame stack, attaching the video id from the sidecar.
    pub fn into_stack(self, video_id: &str) -> Result<EmbeddingStack, CacheError> {
        if self.kind != EmbeddingKind::Frame {
            return Err(CacheError::Contents {
                expected: "frame stack",
                message: format!("kind is {:?}", self.kind),
            });
        }
        let dim = self.dim as usize;
        let vectors = self
            .values
            .chunks(dim)
            .map(|chunk| EmbeddingVector::new(chunk.to_vec(), EmbeddingKind::Frame))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CacheError::Contents {
                expected: "frame stack",
                message: e.to_string(),
            })?;
        EmbeddingStack::new(video_id.to_string(), vectors).map_err(|e| CacheError::Contents {
            expected: "frame stack",
            message: e.to_string(),
        })
    }

    /// Rebuilds a single pooled/text/fused vector.
    pub fn into_vector(self) -> Result<EmbeddingVector, CacheError> {
        if self.kind == EmbeddingKind::Frame || self.count != 1 {
            return Err(CacheError::Contents {
                expected: "single vector",
                message: format!("kind {:?} with count {}", self.kind, self.count),
            });
        }
        EmbeddingVector::new(self.values, self.kind).map_err(|e| CacheError::Contents {
            expected: "single vector",
            message: e.to_string(),
        })
    }
}

fn kind_byte(kind: EmbeddingKind) -> u8 {
    match kind {
        EmbeddingKind::Frame => 0,
        EmbeddingKind::VideoPooled => 1,
        EmbeddingKind::Text => 2,
        EmbeddingKind::Fused => 3,
    }
}

fn kind_from_byte(byte: u8) -> Option<EmbeddingKind> {
    match byte {
        0 => Some(EmbeddingKind::Frame),
        1 => Some(EmbeddingKind::VideoPooled),
        2 => Some(EmbeddingKind::Text),
        3 => Some(EmbeddingKind::Fused),
        _ => None,
    }
}

/// Serializes a cache entry to `path`. Round-trips bit-exactly.
pub fn cache_write(path: &Path, entry: &CachedEmbedding) -> Result<(), CacheError> {
    debug_assert_eq!(entry.values.len(), entry.dim as usize * entry.count as usize);
    let mut bytes =
        Vec::with_capacity(4 + 2 + 1 + 4 + 4 + entry.values.len() * 4 + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.push(kind_byte(entry.kind));
    bytes.extend_from_slice(&entry.dim.to_le_bytes());
    bytes.extend_from_slice(&entry.count.to_le_bytes());
    let payload_start = bytes.len();
    for v in &entry.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&bytes[payload_start..]);
    bytes.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, bytes).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a cache entry back, verifying magic, version, size, and checksum.
pub fn cache_read(path: &Path) -> Result<CachedEmbedding, CacheError> {
    let bytes = std::fs::read(path).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let err_path = || path.to_path_buf();

    if bytes.len() < 15 {
        return Err(CacheError::Truncated {
            path: err_path(),
            expected: 15,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(CacheError::BadMagic { path: err_path() });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CacheError::UnsupportedVersion {
            path: err_path(),
            version,
        });
    }
    let kind = kind_from_byte(bytes[6]).ok_or(CacheError::InvalidKind {
        path: err_path(),
        kind: bytes[6],
    })?;
    let dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
    let count = u32::from_le_bytes(bytes[11..15].try_into().unwrap());
    if dim == 0 || count == 0 {
        return Err(CacheError::InvalidHeader {
            path: err_path(),
            message: format!("dim {dim}, count {count}"),
        });
    }
    if kind != EmbeddingKind::Frame && count != 1 {
        return Err(CacheError::InvalidHeader {
            path: err_path(),
            message: format!("kind {:?} must have count 1, got {count}", kind),
        });
    }

    let payload_len = dim as usize * count as usize * 4;
    let expected_total = 15 + payload_len + 4;
    if bytes.len() < expected_total {
        return Err(CacheError::Truncated {
            path: err_path(),
            expected: expected_total,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[15..15 + payload_len];
    let stored_crc =
        u32::from_le_bytes(bytes[15 + payload_len..15 + payload_len + 4].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return Err(CacheError::ChecksumMismatch { path: err_path() });
    }

    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(CachedEmbedding {
        kind,
        dim,
        count,
        values,
    })
}

/// Provenance record stored next to each cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarMeta {
    pub video_id: String,
    pub backend_id: String,
    pub version: String,
    /// Content hash of the inputs that produced the cache; used by the
    /// pipeline to skip up-to-date entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
}

/// `<cache>.vemb` -> `<cache>.vemb.meta`
pub fn sidecar_path(cache_path: &Path) -> PathBuf {
    let mut name = cache_path.as_os_str().to_os_string();
    name.push(".meta");
    PathBuf::from(name)
}

pub fn write_sidecar(cache_path: &Path, meta: &SidecarMeta) -> Result<(), CacheError> {
    let path = sidecar_path(cache_path);
    let line = serde_json::to_string(meta).expect("sidecar serializes");
    std::fs::write(&path, format!("{line}\n")).map_err(|source| CacheError::Io { path, source })
}

/// Reads the sidecar for a cache file; `None` when it does not exist.
pub fn read_sidecar(cache_path: &Path) -> Result<Option<SidecarMeta>, CacheError> {
    let path = sidecar_path(cache_path);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(source) => return Err(CacheError::Io { path, source }),
    };
    let meta = serde_json::from_str(text.trim()).map_err(|e| CacheError::Sidecar {
        path,
        message: e.to_string(),
    })?;
    Ok(Some(meta))
}
