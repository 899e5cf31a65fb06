//! Model container: magic, version, JSON manifest, little-endian `f32` parameter
//! blobs, trailing CRC-32 of everything before it.
//!
//! ```text
//! b"ADVMAPNN" | u32 version | u32 manifest_len | manifest | (weight, bias)* | u32 crc32
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::layers::LayerSpec;
use super::model::{LayerParams, Model};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"ADVMAPNN";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}, expected {MODEL_VERSION}")]
    Version(u32),
    #[error("model file truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("{0} trailing bytes after parameters")]
    Trailing(usize),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    seed: u64,
    /// `(weight shape, bias len)` for every parameterised layer, in order.
    params: Vec<(Vec<usize>, usize)>,
    #[serde(default)]
    tag: String,
}

pub fn serialize_model(model: &Model) -> Vec<u8> {
    serialize_model_tagged(model, "")
}

/// Serializes with a free-form tag (e.g. a config hash) stored in the manifest.
pub fn serialize_model_tagged(model: &Model, tag: &str) -> Vec<u8> {
    let params: Vec<&LayerParams> = model.params().iter().flatten().collect();
    let manifest = Manifest {
        input_shape: model.input_shape().to_vec(),
        layers: model.layers().to_vec(),
        seed: model.seed(),
        params: params
            .iter()
            .map(|p| (p.weight.shape().to_vec(), p.bias.len()))
            .collect(),
        tag: tag.to_string(),
    };
    let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    for p in params {
        for v in p.weight.data().iter().chain(p.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Reads the tag stored by [`serialize_model_tagged`].
pub fn model_tag(bytes: &[u8]) -> Result<String, ModelFileError> {
    let (manifest, _) = read_manifest(bytes)?;
    Ok(manifest.tag)
}

fn read_manifest(bytes: &[u8]) -> Result<(Manifest, usize), ModelFileError> {
    if bytes.len() < 20 {
        return Err(if bytes.len() >= 8 && &bytes[..8] != MODEL_MAGIC {
            ModelFileError::BadMagic
        } else {
            ModelFileError::Truncated
        });
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelFileError::Checksum { stored, computed });
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(ModelFileError::Version(version));
    }
    let mlen = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
    let end = 16usize.checked_add(mlen).ok_or(ModelFileError::Truncated)?;
    if end > body.len() {
        return Err(ModelFileError::Truncated);
    }
    let manifest: Manifest =
        serde_json::from_slice(&body[16..end]).map_err(|e| ModelFileError::Manifest(e.to_string()))?;
    Ok((manifest, end))
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Model, ModelFileError> {
    let (manifest, mut at) = read_manifest(bytes)?;
    let body = &bytes[..bytes.len() - 4];
    let mut take = |n: usize| -> Result<Vec<f32>, ModelFileError> {
        let len = n.checked_mul(4).ok_or(ModelFileError::Truncated)?;
        let end = at.checked_add(len).ok_or(ModelFileError::Truncated)?;
        if end > body.len() {
            return Err(ModelFileError::Truncated);
        }
        let vals = body[at..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        at = end;
        Ok(vals)
    };
    let mut blobs = Vec::with_capacity(manifest.params.len());
    for (wshape, blen) in &manifest.params {
        let wlen = wshape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| ModelFileError::Manifest("weight shape overflows".into()))?;
        let w = take(wlen)?;
        let b = take(*blen)?;
        let weight = Tensor::new(wshape.clone(), w).map_err(|e| ModelFileError::Manifest(e.to_string()))?;
        let bias = Tensor::new(vec![*blen], b).map_err(|e| ModelFileError::Manifest(e.to_string()))?;
        blobs.push(LayerParams { weight, bias });
    }
    if at != body.len() {
        return Err(ModelFileError::Trailing(body.len() - at));
    }
    let mut blobs = blobs.into_iter();
    let params = manifest
        .layers
        .iter()
        .map(|l| if l.has_params() { blobs.next() } else { None })
        .collect::<Vec<_>>();
    if blobs.next().is_some() || params.iter().zip(&manifest.layers).any(|(p, l)| p.is_none() && l.has_params()) {
        return Err(ModelFileError::Manifest("parameter count does not match layers".into()));
    }
    Model::from_parts(manifest.input_shape, manifest.layers, params, manifest.seed)
        .map_err(|e| ModelFileError::Manifest(e.to_string()))
}
