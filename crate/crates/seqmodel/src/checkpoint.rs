//! Model checkpoints: a directory holding `weights.f32` (all parameters,
//! flat little-endian f32 in registry order) and `meta.json` (schema
//! version, model configuration, normalization statistics, the tensor
//! name/shape table, and a SHA-256 of the weight bytes). The metadata is
//! written last so a crashed save never looks complete; loading verifies
//! version, registry layout, length, and checksum before accepting bytes.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::model::DynamicsModel;
use crate::norm::NormStats;
use crate::weights::init_weights;

pub const SCHEMA_VERSION: u32 = 1;
const WEIGHTS_FILE: &str = "weights.f32";
const META_FILE: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    schema_version: u32,
    cfg: ModelConfig,
    stats: NormStats,
    tensors: Vec<TensorMeta>,
    weights_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write a model checkpoint into `dir` (created if missing).
pub fn save(model: &DynamicsModel, dir: impl AsRef<Path>) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    let flat = model.weights.flat();
    let mut bytes = Vec::with_capacity(flat.len() * 4);
    for v in &flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let wpath = dir.join(WEIGHTS_FILE);
    fs::write(&wpath, &bytes).map_err(|e| ModelError::io(&wpath, e))?;
    let meta = CheckpointMeta {
        schema_version: SCHEMA_VERSION,
        cfg: model.cfg().clone(),
        stats: model.stats.clone(),
        tensors: model
            .weights
            .iter()
            .map(|(n, t)| TensorMeta {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        weights_sha256: sha256_hex(&bytes),
    };
    let mpath = dir.join(META_FILE);
    let json = serde_json::to_vec_pretty(&meta)?;
    fs::write(&mpath, json).map_err(|e| ModelError::io(&mpath, e))?;
    Ok(())
}

/// Load a checkpoint saved by [`save`], verifying integrity end to end.
pub fn load(dir: impl AsRef<Path>) -> Result<DynamicsModel, ModelError> {
    let dir = dir.as_ref();
    let mpath = dir.join(META_FILE);
    let mbytes = fs::read(&mpath).map_err(|e| ModelError::io(&mpath, e))?;
    let meta: CheckpointMeta = serde_json::from_slice(&mbytes)?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(ModelError::VersionMismatch {
            found: meta.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    meta.cfg.validate()?;
    meta.stats.validate()?;
    // Rebuild the expected registry from the configuration and require the
    // stored tensor table to match it exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut weights = init_weights(&meta.cfg, &mut rng);
    if meta.tensors.len() != weights.len() {
        return Err(ModelError::LengthMismatch {
            what: "checkpoint tensor count",
            got: meta.tensors.len(),
            want: weights.len(),
        });
    }
    for ((name, tensor), tm) in weights.iter().zip(&meta.tensors) {
        let expected = tensor.shape().to_vec();
        if name != tm.name || expected != tm.shape {
            return Err(ModelError::TensorMismatch {
                name: tm.name.clone(),
                expected,
                found: tm.shape.clone(),
            });
        }
    }
    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(|e| ModelError::io(&wpath, e))?;
    let expected_bytes = weights.n_params() * 4;
    if bytes.len() != expected_bytes {
        return Err(ModelError::Truncated {
            file: WEIGHTS_FILE,
            expected: expected_bytes,
            found: bytes.len(),
        });
    }
    if sha256_hex(&bytes) != meta.weights_sha256 {
        return Err(ModelError::ChecksumMismatch { file: WEIGHTS_FILE });
    }
    let flat: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    weights.set_flat(&flat)?;
    DynamicsModel::from_parts(meta.cfg, weights, meta.stats)
}
