//! Checkpoint format: one file holding a single-line JSON manifest (version,
//! parameter names, shapes, byte offsets) followed by the flat f64
//! little-endian data block.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use grounder_autodiff::Tensor;

use crate::error::{ModelError, Result};
use crate::params::ParamStore;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the data block.
    pub offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn n_scalars(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum()
    }
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let mut entries = Vec::with_capacity(store.len());
    let mut offset = 0u64;
    for (name, tensor) in store.names().iter().zip(store.tensors()) {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        offset += (tensor.numel() * 8) as u64;
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        entries,
    };
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer(&mut file, &manifest)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    file.write_all(b"\n")?;
    for tensor in store.tensors() {
        for v in tensor.data() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let content = std::fs::read(path)?;
    let newline = content
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ModelError::Checkpoint("missing manifest line".into()))?;
    let manifest: Manifest = serde_json::from_slice(&content[..newline])
        .map_err(|e| ModelError::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            manifest.version
        )));
    }
    Ok(manifest)
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut file = std::fs::File::open(path)?;
    let mut content = Vec::new();
    file.read_to_end(&mut content)?;
    let newline = content
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ModelError::Checkpoint("missing manifest line".into()))?;
    let manifest: Manifest = serde_json::from_slice(&content[..newline])
        .map_err(|e| ModelError::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            manifest.version
        )));
    }
    let data = &content[newline + 1..];
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + numel * 8;
        if end > data.len() {
            return Err(ModelError::Checkpoint(format!(
                "entry {:?} runs past end of data",
                entry.name
            )));
        }
        let values: Vec<f64> = data[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((
            entry.name.clone(),
            Tensor::new(entry.shape.clone(), values)
                .map_err(|e| ModelError::Checkpoint(e.to_string()))?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut store = ParamStore::new();
        store.register("a.w", Tensor::new(vec![2, 3], vec![1.5, -2.25, 0.1, 4.0, -0.0, 9.75]).unwrap());
        store.register("b", Tensor::new(vec![1], vec![std::f64::consts::PI]).unwrap());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&store, &path).unwrap();

        let loaded = load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for ((name, tensor), (want_name, want)) in loaded.iter().zip([
            ("a.w", store.tensor_by_name("a.w").unwrap()),
            ("b", store.tensor_by_name("b").unwrap()),
        ]) {
            assert_eq!(name, want_name);
            assert!(tensor
                .data()
                .iter()
                .zip(want.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        let manifest = read_manifest(&path).unwrap();
        assert_eq!(manifest.version, CHECKPOINT_VERSION);
        assert_eq!(manifest.n_scalars(), 7);
    }
}
