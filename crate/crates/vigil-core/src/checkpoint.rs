//! Checkpoint directory format.
//!
//! `manifest.json` holds the model spec, vocabulary size, and the ordered
//! list of parameter names and shapes. `weights.bin` is the concatenation of
//! every parameter as little-endian 32-bit floats, in manifest order. The
//! manifest is written last and both files are written atomically, so an
//! interrupted save never yields a loadable-but-wrong checkpoint; loading
//! validates every shape before reading and the exact byte length after.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::EmbeddingTable;
use crate::model::{Model, ModelSpec};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::util::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: ModelSpec,
    vocab_size: usize,
    params: Vec<ManifestParam>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestParam {
    name: String,
    shape: Vec<usize>,
}

/// Write `dir/weights.bin` then `dir/manifest.json`.
pub fn save<T: Scalar>(model: &Model<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::with_capacity(model.store().len());
    let mut bytes: Vec<u8> = Vec::new();
    for (_, p) in model.store().iter() {
        params.push(ManifestParam {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
        });
        for &v in p.value.data() {
            bytes.extend_from_slice(&v.into_f32().to_le_bytes());
        }
    }
    write_atomic(&dir.join(WEIGHTS_FILE), &bytes)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: model.spec().clone(),
        vocab_size: model.vocab_size(),
        params,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Corrupt(format!("manifest serialization: {e}")))?;
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(())
}

/// Rebuild the model from a checkpoint directory.
pub fn load<T: Scalar>(dir: &Path) -> Result<Model<T>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(Error::Corrupt(format!(
            "no manifest at {}",
            manifest_path.display()
        )));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .map_err(|e| Error::Corrupt(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Corrupt(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }

    // Rebuild the architecture, then overwrite every value from the weights
    // file. The init RNG is irrelevant.
    let table = EmbeddingTable::new(
        crate::tensor::Tensor::zeros(&[manifest.vocab_size, manifest.spec.embed_dim]),
        manifest.spec.embeddings_trainable,
    )?;
    let mut model: Model<T> = Model::build(manifest.spec.clone(), table, &mut RngState::new(0))?;

    if manifest.params.len() != model.store().len() {
        return Err(Error::Corrupt(format!(
            "manifest lists {} parameters, architecture has {}",
            manifest.params.len(),
            model.store().len()
        )));
    }
    let expected: Vec<(String, Vec<usize>)> = model
        .store()
        .iter()
        .map(|(_, p)| (p.name.clone(), p.value.shape().to_vec()))
        .collect();
    for (m, (name, shape)) in manifest.params.iter().zip(&expected) {
        if &m.name != name {
            return Err(Error::Corrupt(format!(
                "manifest parameter '{}' does not match expected '{name}'",
                m.name
            )));
        }
        if &m.shape != shape {
            return Err(Error::Corrupt(format!(
                "parameter '{name}': manifest shape {:?} does not match expected {shape:?}",
                m.shape
            )));
        }
    }

    let bytes = fs::read(dir.join(WEIGHTS_FILE))
        .map_err(|e| Error::Corrupt(format!("weights file: {e}")))?;
    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if bytes.len() != total * 4 {
        return Err(Error::Corrupt(format!(
            "weights file holds {} bytes, manifest requires {}",
            bytes.len(),
            total * 4
        )));
    }
    let mut offset = 0usize;
    let ids: Vec<crate::params::ParamId> =
        model.store().iter().map(|(id, _)| id).collect();
    for id in ids {
        let numel = model.store().value(id).numel();
        let data = model.store_mut().value_mut(id).data_mut();
        for v in data.iter_mut().take(numel) {
            let raw = [
                bytes[offset],
                bytes[offset + 1],
                bytes[offset + 2],
                bytes[offset + 3],
            ];
            *v = T::from_f32(f32::from_le_bytes(raw));
            offset += 4;
        }
    }
    Ok(model)
}
