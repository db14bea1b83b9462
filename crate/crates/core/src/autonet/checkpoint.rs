//! Parameter snapshots: raw little-endian `f64` values in `<stem>.bin` and a
//! JSON manifest in `<stem>.json` naming each tensor's shape and offset.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AutonetError, Tensor};

pub const FORMAT: &str = "mecslice-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the value stream, in `f64` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub tensors: Vec<Entry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

pub fn save(stem: &Path, tensors: &[(String, &Tensor)], metadata: serde_json::Value) -> Result<(), AutonetError> {
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(Entry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
        for v in t.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype: "f64-le".into(),
        tensors: entries,
        metadata,
    };
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(with_ext(stem, "bin"), bytes)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| AutonetError::Checkpoint(e.to_string()))?;
    fs::write(with_ext(stem, "json"), json)?;
    Ok(())
}

pub fn load(stem: &Path) -> Result<(Manifest, Vec<(String, Tensor)>), AutonetError> {
    let json = fs::read_to_string(with_ext(stem, "json"))?;
    let manifest: Manifest = serde_json::from_str(&json).map_err(|e| AutonetError::Checkpoint(e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != VERSION || manifest.dtype != "f64-le" {
        return Err(AutonetError::Checkpoint(format!(
            "unsupported checkpoint {} v{} ({})",
            manifest.format, manifest.version, manifest.dtype
        )));
    }
    let bytes = fs::read(with_ext(stem, "bin"))?;
    if bytes.len() % 8 != 0 {
        return Err(AutonetError::Checkpoint("value stream is not a whole number of f64".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let len: usize = e.shape.iter().product();
        let slice = values
            .get(e.offset..e.offset + len)
            .ok_or_else(|| AutonetError::Checkpoint(format!("tensor {} runs past the value stream", e.name)))?;
        out.push((e.name.clone(), Tensor::new(e.shape.clone(), slice.to_vec())?));
    }
    Ok((manifest, out))
}
