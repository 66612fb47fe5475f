use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AblationFlags, ApslModel, ModelConfig, ModelError, Param};
use crate::autodiff::Tensor;
use crate::dataset::Platform;

pub const MANIFEST_JSON: &str = "manifest.json";
pub const CHECKPOINT_BIN: &str = "checkpoint.bin";
const FORMAT: &str = "apsl-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset into the blob.
    pub offset: usize,
}

/// JSON side of a checkpoint; tensor data lives in a little-endian f64 blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub model: ModelConfig,
    pub platform_order: Vec<Platform>,
    pub flags: AblationFlags,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
    /// Free-form run description (used by the CLI to rebuild splits).
    #[serde(default)]
    pub run: serde_json::Value,
}

fn ck_err(path: &Path, msg: impl ToString) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        msg: msg.to_string(),
    }
}

pub fn save_checkpoint(
    dir: &Path,
    model: &ApslModel,
    flags: AblationFlags,
    seed: u64,
    run: serde_json::Value,
) -> Result<CheckpointManifest, ModelError> {
    fs::create_dir_all(dir).map_err(|e| ck_err(dir, e))?;
    let mut blob = Vec::with_capacity(model.num_parameters() * 8);
    let mut tensors = Vec::with_capacity(model.params().len());
    for p in model.params() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            offset: blob.len(),
        });
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format: FORMAT.to_string(),
        model: model.config().clone(),
        platform_order: model.config().platforms.clone(),
        flags,
        seed,
        tensors,
        run,
    };
    let bin = dir.join(CHECKPOINT_BIN);
    fs::write(&bin, &blob).map_err(|e| ck_err(&bin, e))?;
    let man = dir.join(MANIFEST_JSON);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&man, json + "\n").map_err(|e| ck_err(&man, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ApslModel, CheckpointManifest), ModelError> {
    let man = dir.join(MANIFEST_JSON);
    let text = fs::read_to_string(&man).map_err(|e| ck_err(&man, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| ck_err(&man, e))?;
    if manifest.format != FORMAT {
        return Err(ck_err(&man, format!("unsupported format {:?}", manifest.format)));
    }
    let bin = dir.join(CHECKPOINT_BIN);
    let blob = fs::read(&bin).map_err(|e| ck_err(&bin, e))?;
    let mut params = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let len = t.rows * t.cols;
        let end = t.offset + len * 8;
        let bytes = blob
            .get(t.offset..end)
            .ok_or_else(|| ck_err(&bin, format!("tensor {} runs past end of blob", t.name)))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.push(Param {
            name: t.name.clone(),
            value: Tensor::new(t.rows, t.cols, data)?,
        });
    }
    let model = ApslModel::from_params(manifest.model.clone(), params)?;
    Ok((model, manifest))
}
