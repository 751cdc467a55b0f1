//! Model artifact file format (`.vmdl`).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   "VMDL"        4 bytes ASCII
//! version u16           currently 1; newer versions are refused
//! hlen    u32           header length in bytes
//! header  JSON          model kind, config snapshot, backends, pooling,
//!                       threshold, resolved kernel parameters
//! payload               n_arrays u32, then per array:
//!                       name_len u16 | name | ndim u8 | dims u32*ndim |
//!                       f32 data (row-major)
//! crc32   u32           CRC-32 of the payload bytes
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::PoolingMethod;

use super::{
    BackendBindings, DenseParams, MlpParams, ModelConfigSnapshot, ModelKind, ModelParams,
    SvmKernel, SvmParams, TrainedModelArtifact, ARTIFACT_FORMAT_VERSION,
};

const MAGIC: &[u8; 4] = b"VMDL";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic (not a model artifact)")]
    BadMagic,
    #[error("artifact format version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("corrupt artifact: {message}")]
    Corrupt { message: String },
}

fn corrupt(message: impl Into<String>) -> ArtifactError {
    ArtifactError::Corrupt {
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
struct ArtifactHeader {
    model_kind: ModelKind,
    config: ModelConfigSnapshot,
    backends: BackendBindings,
    pooling: PoolingMethod,
    threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    svm_kernel: Option<SvmKernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    svm_kernel_width: Option<f64>,
}

struct NamedArray<'a> {
    name: String,
    dims: Vec<u32>,
    data: &'a [f32],
}

fn arrays_of(params: &ModelParams) -> Vec<NamedArray<'_>> {
    match params {
        ModelParams::Mlp(mlp) => {
            let mut arrays = Vec::with_capacity(mlp.layers.len() * 2);
            for (i, layer) in mlp.layers.iter().enumerate() {
                arrays.push(NamedArray {
                    name: format!("w{i}"),
                    dims: vec![layer.out_dim as u32, layer.in_dim as u32],
                    data: &layer.weights,
                });
                arrays.push(NamedArray {
                    name: format!("b{i}"),
                    dims: vec![layer.out_dim as u32],
                    data: &layer.bias,
                });
            }
            arrays
        }
        ModelParams::Svm(svm) => {
            let n_sv = svm.coefficients.len() as u32;
            vec![
                NamedArray {
                    name: "support_vectors".into(),
                    dims: vec![n_sv, svm.dim as u32],
                    data: &svm.support_vectors,
                },
                NamedArray {
                    name: "coefficients".into(),
                    dims: vec![n_sv],
                    data: &svm.coefficients,
                },
                NamedArray {
                    name: "bias".into(),
                    dims: vec![1],
                    data: std::slice::from_ref(&svm.bias),
                },
            ]
        }
    }
}

/// Serializes an artifact to its byte representation.
pub fn artifact_to_bytes(artifact: &TrainedModelArtifact) -> Result<Vec<u8>, ArtifactError> {
    let (svm_kernel, svm_kernel_width) = match &artifact.params {
        ModelParams::Svm(p) => (Some(p.kernel), Some(p.kernel_width)),
        ModelParams::Mlp(_) => (None, None),
    };
    let header = ArtifactHeader {
        model_kind: artifact.model_kind,
        config: artifact.config.clone(),
        backends: artifact.backends.clone(),
        pooling: artifact.pooling,
        threshold: artifact.threshold,
        svm_kernel,
        svm_kernel_width,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| corrupt(format!("header: {e}")))?;

    let arrays = arrays_of(&artifact.params);
    let mut payload = Vec::new();
    payload.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for array in &arrays {
        payload.extend_from_slice(&(array.name.len() as u16).to_le_bytes());
        payload.extend_from_slice(array.name.as_bytes());
        payload.push(array.dims.len() as u8);
        for &d in &array.dims {
            payload.extend_from_slice(&d.to_le_bytes());
        }
        for &v in array.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut bytes = Vec::with_capacity(4 + 2 + 4 + header_json.len() + payload.len() + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&ARTIFACT_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    bytes.extend_from_slice(&payload);
    bytes.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ArtifactError> {
        if self.pos + n > self.bytes.len() {
            return Err(corrupt(format!("truncated while reading {what}")));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8, ArtifactError> {
        Ok(self.take(1, what)?[0])
    }
}

/// Parses an artifact from bytes, verifying magic, version, and checksum.
pub fn artifact_from_bytes(bytes: &[u8]) -> Result<TrainedModelArtifact, ArtifactError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    let version = cur.u16("version")?;
    if version != ARTIFACT_FORMAT_VERSION {
        return Err(ArtifactError::VersionMismatch {
            found: version,
            supported: ARTIFACT_FORMAT_VERSION,
        });
    }
    let header_len = cur.u32("header length")? as usize;
    let header_bytes = cur.take(header_len, "header")?;
    let header: ArtifactHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| corrupt(format!("header JSON: {e}")))?;

    let payload_start = cur.pos;
    if bytes.len() < payload_start + 4 {
        return Err(corrupt("truncated payload"));
    }
    let payload_end = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    if crc32fast::hash(&bytes[payload_start..payload_end]) != stored_crc {
        return Err(corrupt("payload checksum mismatch"));
    }

    let n_arrays = cur.u32("array count")? as usize;
    let mut arrays: Vec<(String, Vec<u32>, Vec<f32>)> = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let name_len = cur.u16("array name length")? as usize;
        let name = String::from_utf8(cur.take(name_len, "array name")?.to_vec())
            .map_err(|_| corrupt("array name is not UTF-8"))?;
        let ndim = cur.u8("array ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32("array dim")?);
        }
        let len: usize = dims.iter().map(|&d| d as usize).product();
        let data_bytes = cur.take(len * 4, &format!("array \"{name}\" data"))?;
        let data: Vec<f32> = data_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push((name, dims, data));
    }

    let params = match header.model_kind {
        ModelKind::MlpBinary | ModelKind::MlpRegressor => {
            let ModelConfigSnapshot::Mlp(mlp_config) = &header.config else {
                return Err(corrupt("mlp artifact with non-mlp config snapshot"));
            };
            if arrays.len() % 2 != 0 {
                return Err(corrupt("mlp artifact must hold weight/bias pairs"));
            }
            let mut layers = Vec::with_capacity(arrays.len() / 2);
            for (i, pair) in arrays.chunks(2).enumerate() {
                let (w_name, w_dims, weights) = &pair[0];
                let (b_name, b_dims, bias) = &pair[1];
                if w_name != &format!("w{i}") || b_name != &format!("b{i}") {
                    return Err(corrupt(format!(
                        "unexpected array order: \"{w_name}\", \"{b_name}\""
                    )));
                }
                if w_dims.len() != 2 || b_dims.len() != 1 || w_dims[0] != b_dims[0] {
                    return Err(corrupt(format!("layer {i} has inconsistent shapes")));
                }
                layers.push(DenseParams {
                    in_dim: w_dims[1] as usize,
                    out_dim: w_dims[0] as usize,
                    weights: weights.clone(),
                    bias: bias.clone(),
                });
            }
            ModelParams::Mlp(MlpParams {
                head: mlp_config.head,
                layers,
            })
        }
        ModelKind::Svm => {
            if arrays.len() != 3 {
                return Err(corrupt("svm artifact must hold exactly 3 arrays"));
            }
            let (sv_name, sv_dims, support_vectors) = &arrays[0];
            let (c_name, c_dims, coefficients) = &arrays[1];
            let (b_name, _, bias) = &arrays[2];
            if sv_name != "support_vectors" || c_name != "coefficients" || b_name != "bias" {
                return Err(corrupt("unexpected svm array names"));
            }
            if sv_dims.len() != 2 || c_dims.len() != 1 || sv_dims[0] != c_dims[0] {
                return Err(corrupt("svm arrays have inconsistent shapes"));
            }
            if bias.len() != 1 {
                return Err(corrupt("svm bias must hold exactly 1 value"));
            }
            let kernel = header
                .svm_kernel
                .ok_or_else(|| corrupt("svm artifact missing kernel"))?;
            let kernel_width = header
                .svm_kernel_width
                .ok_or_else(|| corrupt("svm artifact missing kernel width"))?;
            ModelParams::Svm(SvmParams {
                dim: sv_dims[1] as usize,
                support_vectors: support_vectors.clone(),
                coefficients: coefficients.clone(),
                bias: bias[0],
                kernel,
                kernel_width,
            })
        }
    };

    Ok(TrainedModelArtifact {
        model_kind: header.model_kind,
        config: header.config,
        backends: header.backends,
        pooling: header.pooling,
        threshold: header.threshold,
        format_version: version,
        params,
    })
}

/// Writes an artifact file.
pub fn serialize_artifact(
    artifact: &TrainedModelArtifact,
    path: &Path,
) -> Result<(), ArtifactError> {
    let bytes = artifact_to_bytes(artifact)?;
    std::fs::write(path, bytes).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads an artifact file.
pub fn deserialize_artifact(path: &Path) -> Result<TrainedModelArtifact, ArtifactError> {
    let bytes = std::fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    artifact_from_bytes(&bytes)
}
