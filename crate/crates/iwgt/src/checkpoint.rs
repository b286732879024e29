//! Checkpoint directories.
//!
//! A checkpoint is a directory holding `manifest` (JSON: format version,
//! model config, normalization statistics, ordered parameter names and
//! shapes, training metadata) and `params.bin` (every parameter as
//! little-endian `f64`, concatenated in manifest order).

use std::fs;
use std::path::Path;

use iwgt_core::model::{Checkpoint, ModelConfig, TrainingMeta};
use iwgt_core::netgraph::NormStats;
use iwgt_core::tensor::{ParameterSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::dataset::write_atomic;
use crate::error::{Error, FormatError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelConfig,
    pub stats: NormStats,
    pub params: Vec<ParamEntry>,
    pub meta: TrainingMeta,
}

/// Serialized manifest and parameter bytes of `ckpt`.
pub fn encode(ckpt: &Checkpoint) -> Result<(Vec<u8>, Vec<u8>)> {
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        model: ckpt.model.clone(),
        stats: ckpt.stats,
        params: ckpt
            .params
            .iter()
            .map(|(n, t)| ParamEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: ckpt.meta.clone(),
    };
    let mut m = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    m.push(b'\n');
    let mut bin = Vec::with_capacity(8 * ckpt.params.numel());
    for (_, t) in ckpt.params.iter() {
        for v in t.data() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok((m, bin))
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.validate()?;
    let (manifest, params) = encode(ckpt)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(PARAMS_FILE), &params)?;
    write_atomic(&dir.join(MANIFEST_FILE), &manifest)
}

/// Loads and validates a checkpoint; nothing is returned unless every check
/// passes.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::corrupt(&mpath, e.to_string()))?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::corrupt(&mpath, "missing format_version"))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::format(
            &mpath,
            FormatError::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            },
        ));
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| Error::corrupt(&mpath, e.to_string()))?;

    let ppath = dir.join(PARAMS_FILE);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let numel: usize = manifest.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    let expected = 8 * numel as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::format(
            &ppath,
            FormatError::Truncated {
                expected,
                found: bytes.len() as u64,
            },
        ));
    }
    if bytes.len() as u64 > expected {
        return Err(Error::corrupt(&ppath, "trailing bytes after the last parameter"));
    }

    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut params = ParameterSet::new();
    for p in &manifest.params {
        let n: usize = p.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        let t = Tensor::new(p.shape.clone(), data).map_err(|e| Error::corrupt(&mpath, e.to_string()))?;
        params
            .insert(p.name.clone(), t)
            .map_err(|e| Error::corrupt(&mpath, e.to_string()))?;
    }
    let ckpt = Checkpoint {
        model: manifest.model,
        stats: manifest.stats,
        params,
        meta: manifest.meta,
    };
    ckpt.validate()
        .map_err(|e| Error::format(&mpath, FormatError::Shape(e.to_string())))?;
    Ok(ckpt)
}
