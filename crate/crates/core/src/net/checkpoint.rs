//! Binary parameter archive: `MANCKPT1`, a little-endian `u32` header length,
//! a JSON header, then every tensor's `f32` values in little-endian order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::backbone::FeatureExtractor;
use super::branches::ChannelNorm;
use super::model::{Model, ModelConfig};
use super::params::Tensor;
use crate::dataio::BranchKind;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MANCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub norms: BTreeMap<BranchKind, ChannelNorm>,
    pub step: u64,
    /// Training settings echoed for provenance.
    pub train: serde_json::Value,
    pub tensors: Vec<TensorInfo>,
}

pub fn save_checkpoint(model: &Model, step: u64, train: serde_json::Value, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        model: model.config.clone(),
        norms: model.norms.clone(),
        step,
        train,
        tensors: model
            .store
            .tensors()
            .iter()
            .map(|t| TensorInfo {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(12 + json.len() + model.store.num_values() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in model.store.tensors() {
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_header(path: &Path) -> Result<(CheckpointHeader, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + n)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    Ok((header, bytes[12 + n..].to_vec()))
}

/// Loads a checkpoint. When `expected` is given, the stored model config must
/// equal it.
pub fn load_checkpoint(
    path: &Path,
    expected: Option<&ModelConfig>,
    extractor: Option<Arc<dyn FeatureExtractor>>,
) -> Result<(Model, CheckpointHeader)> {
    let (header, data) = read_header(path)?;
    if let Some(exp) = expected {
        if exp != &header.model {
            return Err(Error::Checkpoint(format!(
                "model config mismatch: checkpoint has scenario {} dims {:?}, expected scenario {} dims {:?}",
                header.model.scenario, header.model.dims, exp.scenario, exp.dims
            )));
        }
    }
    let mut model = match extractor {
        Some(e) => Model::with_extractor(header.model.clone(), e, 0)?,
        None => Model::new(header.model.clone(), 0)?,
    };
    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if data.len() != total * 4 {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            total * 4,
            data.len()
        )));
    }
    let mut values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let tensors = header
        .tensors
        .iter()
        .map(|t| Tensor {
            name: t.name.clone(),
            shape: t.shape.clone(),
            data: values.by_ref().take(t.shape.iter().product()).collect(),
        })
        .collect();
    model.store.load_from(tensors)?;
    if header.norms.keys().ne(model.norms.keys()) {
        return Err(Error::Checkpoint("normalisation branches do not match the scenario".into()));
    }
    model.norms = header.norms.clone();
    Ok((model, header))
}
