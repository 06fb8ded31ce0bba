//! Checkpoint files.
//!
//! Layout: `ADVTCKPT`, `u32` version, `u64` header length, a JSON header
//! (model spec, provenance, RNG state, shape table), then every parameter as
//! a little-endian `f64`, layer by layer, weights before bias. Fully
//! connected layers flatten their input channel-major.
//!
//! A checkpoint's id is the SHA-256 of its bytes. Encoding is deterministic,
//! so the id doubles as a digest of the model itself.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor_file::{read_all, write_locked};
use crate::error::{Error, Result};
use crate::network::{LayerParams, ModelSpec, Provenance, WeightedModel};
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADVTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Random streams are counter-based, so the seed and the iteration count
/// are enough to resume every stream a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub algorithm: String,
    pub seed: u64,
    pub iteration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub weights: Vec<usize>,
    pub bias: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub provenance: Provenance,
    pub rng: RngState,
    pub shapes: Vec<ShapeEntry>,
}

pub fn encode_checkpoint<R: Real>(model: &WeightedModel<R>) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        spec: model.spec.clone(),
        provenance: model.provenance.clone(),
        rng: RngState {
            algorithm: "chacha8-stream".into(),
            seed: model.provenance.seed,
            iteration: model.provenance.iteration,
        },
        shapes: model
            .params
            .iter()
            .map(|p| ShapeEntry {
                weights: p.weights.shape().to_vec(),
                bias: p.bias.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Data(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &model.params {
        for v in p.weights.data().iter().chain(p.bias.data()) {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint<R: Real>(bytes: &[u8]) -> Result<(CheckpointHeader, WeightedModel<R>)> {
    let bad = |msg: String| Error::Data(format!("checkpoint: {msg}"));
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let hend = usize::try_from(hlen)
        .ok()
        .and_then(|h| h.checked_add(20))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header length exceeds file".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..hend]).map_err(|e| bad(e.to_string()))?;
    let expected: Vec<ShapeEntry> = header
        .spec
        .param_shapes()?
        .into_iter()
        .map(|s| ShapeEntry {
            weights: s.weights,
            bias: s.bias,
        })
        .collect();
    if header.shapes != expected {
        return Err(bad("shape table does not match the model spec".into()));
    }
    let count: usize = header
        .shapes
        .iter()
        .map(|s| s.weights.iter().product::<usize>() + s.bias.iter().product::<usize>())
        .sum();
    let payload = &bytes[hend..];
    if payload.len() != 8 * count {
        return Err(bad(format!(
            "payload holds {} bytes, shape table needs {}",
            payload.len(),
            8 * count
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| R::from_f64(f64::from_le_bytes(c.try_into().unwrap())));
    let mut take = |shape: &[usize]| -> Result<Tensor<R>> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), values.by_ref().take(n).collect())
    };
    let mut params = Vec::with_capacity(header.shapes.len());
    for s in &header.shapes {
        params.push(LayerParams {
            weights: take(&s.weights)?,
            bias: take(&s.bias)?,
        });
    }
    let model = WeightedModel::from_parts(header.spec.clone(), params, header.provenance.clone())?;
    if !model.is_finite() {
        return Err(bad("non-finite weights".into()));
    }
    Ok((header, model))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Id the checkpoint of `model` would have.
pub fn model_digest<R: Real>(model: &WeightedModel<R>) -> Result<String> {
    Ok(sha256_hex(&encode_checkpoint(model)?))
}

/// Writes `model` and returns its checkpoint id.
pub fn save_checkpoint<R: Real>(path: &Path, model: &WeightedModel<R>) -> Result<String> {
    let bytes = encode_checkpoint(model)?;
    write_locked(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Loads a checkpoint and returns it with its id.
pub fn load_checkpoint<R: Real>(path: &Path) -> Result<(WeightedModel<R>, String)> {
    let bytes = read_all(path)?;
    let (_, model) = decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok((model, sha256_hex(&bytes)))
}
