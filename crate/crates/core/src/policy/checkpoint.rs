//! Parameter checkpoints: `params.bin` holds every tensor as little-endian
//! `f64` in row-major order, concatenated in the fixed tensor order;
//! `manifest.json` records the format version, dimensions, vocabulary hash
//! and each tensor's name, shape and element offset.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Dims, PolicyParams, TENSOR_NAMES};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PFPARAMS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements from the start of the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub dims: Dims,
    pub vocab_hash: String,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(dir: &Path, params: &PolicyParams, vocab_hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(MAGIC.len() + 8 * params.len());
    bytes.extend_from_slice(MAGIC);
    let mut tensors = Vec::new();
    let mut offset = 0;
    for ((name, shape), data) in TENSOR_NAMES
        .iter()
        .zip(params.shapes())
        .zip(params.tensors())
    {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape,
            offset,
        });
        offset += data.len();
        for x in data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        dims: params.dims(),
        vocab_hash: vocab_hash.to_string(),
        tensors,
    };
    fs::write(dir.join("params.bin"), bytes)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, PolicyParams)> {
    let manifest_path = dir.join("manifest.json");
    let corrupt = |file: &Path, message: String| Error::Corrupt {
        file: file.to_path_buf(),
        message,
    };
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .map_err(|e| corrupt(&manifest_path, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(
            &manifest_path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let mut params =
        PolicyParams::zeros(manifest.dims).map_err(|e| corrupt(&manifest_path, e.to_string()))?;

    let bin_path = dir.join("params.bin");
    let bytes = fs::read(&bin_path)?;
    if bytes.len() != MAGIC.len() + 8 * params.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt(
            &bin_path,
            "size or magic does not match the manifest".into(),
        ));
    }
    let payload = &bytes[MAGIC.len()..];
    let shapes = params.shapes();
    if manifest.tensors.len() != shapes.len()
        || manifest
            .tensors
            .iter()
            .zip(&shapes)
            .any(|(e, s)| &e.shape != s)
    {
        return Err(corrupt(
            &manifest_path,
            "tensor table does not match the dimensions".into(),
        ));
    }
    for (dst, entry) in params.tensors_mut().into_iter().zip(&manifest.tensors) {
        let start = 8 * entry.offset;
        let chunk = payload.get(start..start + 8 * dst.len()).ok_or_else(|| {
            corrupt(
                &bin_path,
                format!("tensor `{}` runs past the payload", entry.name),
            )
        })?;
        for (d, b) in dst.iter_mut().zip(chunk.chunks_exact(8)) {
            *d = f64::from_le_bytes(b.try_into().unwrap());
        }
    }
    Ok((manifest, params))
}
