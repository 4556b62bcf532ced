//! Checkpoint container:
//!
//! ```text
//! "OCSYCKPT" | version: u32 LE | manifest length: u64 LE | manifest JSON | f64 LE blobs
//! ```
//!
//! The manifest records the model configuration, each tensor's name and
//! shape in traversal order, and free-form metadata. Blobs follow in the
//! same order, row-major.

use serde::{Deserialize, Serialize};

use super::model::{FlowModel, ModelConfig};
use crate::attention::ParamSet;
use crate::error::parse;
use crate::Result;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OCSYCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    tensors: Vec<TensorInfo>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn save_checkpoint(model: &FlowModel, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let named = model.params.named();
    let manifest = Manifest {
        config: model.config.clone(),
        tensors: named.iter().map(|(n, t)| TensorInfo { name: n.clone(), shape: [t.nrows(), t.ncols()] }).collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * model.params.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in named {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint, returning the model and its metadata. Sizes are
/// checked against the configuration before any tensor is allocated.
pub fn load_checkpoint(bytes: &[u8]) -> Result<(FlowModel, serde_json::Value)> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(parse("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(parse(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let rest = &bytes[20..];
    if len > rest.len() as u64 {
        return Err(parse("manifest length exceeds file size"));
    }
    let (json, blobs) = rest.split_at(len as usize);
    let manifest: Manifest = serde_json::from_slice(json).map_err(|e| parse(format!("bad manifest: {e}")))?;
    manifest.config.validate()?;
    let expected = manifest.config.num_params()?;
    if blobs.len() % 8 != 0 || blobs.len() / 8 != expected {
        return Err(parse(format!("expected {expected} parameters, found {} bytes", blobs.len())));
    }
    let mut model = FlowModel::new(manifest.config)?;
    let names: Vec<(String, [usize; 2])> =
        model.params.named().iter().map(|(n, t)| (n.clone(), [t.nrows(), t.ncols()])).collect();
    if names.len() != manifest.tensors.len()
        || names.iter().zip(&manifest.tensors).any(|((n, s), info)| *n != info.name || *s != info.shape)
    {
        return Err(parse("tensor list does not match the configuration"));
    }
    let mut chunks = blobs.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v = chunks.next().expect("length checked");
        }
    }
    Ok((model, manifest.meta))
}
