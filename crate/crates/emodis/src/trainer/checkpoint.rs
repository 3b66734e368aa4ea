//! Single-file checkpoint container.
//!
//! Layout: 8-byte magic (format + version), little-endian u64 JSON length,
//! JSON metadata (step, config fingerprint, model shape, tensor manifest),
//! then raw f32 data for each tensor in manifest order. Writes go through a
//! temp file and an atomic rename.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{Model, ModelMeta, TrainConfig};

const MAGIC: &[u8; 8] = b"EMODISC\x01";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub step: usize,
    pub config_fingerprint: String,
    pub train_config: TrainConfig,
    pub model: ModelMeta,
    pub tensors: Vec<(String, Vec<usize>)>,
}

pub struct LoadedCheckpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
    pub path: PathBuf,
}

impl LoadedCheckpoint {
    pub fn tensor(&self, name: &str, device: &candle_core::Device) -> Result<Option<Tensor>> {
        match self.tensors.get(name) {
            None => Ok(None),
            Some((shape, data)) => {
                Ok(Some(Tensor::from_vec(data.clone(), shape.as_slice(), device)?))
            }
        }
    }
}

/// Serialize model parameters plus any extra named tensors (optimizer state).
pub fn save_checkpoint(
    model: &Model,
    extra: &[(String, Tensor)],
    step: usize,
    config: &TrainConfig,
    path: &Path,
) -> Result<()> {
    let mut entries: Vec<(String, Tensor)> = model
        .store
        .iter()
        .map(|(name, var)| (name.clone(), var.as_tensor().clone()))
        .collect();
    entries.extend(extra.iter().cloned());

    let manifest: Vec<(String, Vec<usize>)> =
        entries.iter().map(|(n, t)| (n.clone(), t.dims().to_vec())).collect();
    let meta = CheckpointMeta {
        version: VERSION,
        step,
        config_fingerprint: config.fingerprint(),
        train_config: config.clone(),
        model: model.meta.clone(),
        tensors: manifest,
    };
    let meta_json = serde_json::to_vec(&meta)?;

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    for (_, t) in &entries {
        let flat = t.flatten_all()?.to_vec1::<f32>()?;
        for v in flat {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let tmp = path.with_extension("ckpt.tmp");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| Error::CheckpointFormat { path: path.into(), msg: "truncated magic".into() })?;
    if &magic[..7] != &MAGIC[..7] {
        return Err(Error::CheckpointFormat { path: path.into(), msg: "not an emodis checkpoint".into() });
    }
    if magic[7] != VERSION as u8 {
        return Err(Error::CheckpointVersion { path: path.into(), found: magic[7] as u32, expected: VERSION });
    }
    let mut len = [0u8; 8];
    f.read_exact(&mut len)
        .map_err(|_| Error::CheckpointFormat { path: path.into(), msg: "truncated header".into() })?;
    let meta_len = u64::from_le_bytes(len) as usize;
    let mut meta_buf = vec![0u8; meta_len];
    f.read_exact(&mut meta_buf)
        .map_err(|_| Error::CheckpointFormat { path: path.into(), msg: "truncated metadata".into() })?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_buf).map_err(|e| Error::CheckpointFormat {
        path: path.into(),
        msg: format!("bad metadata: {e}"),
    })?;
    if meta.version != VERSION {
        return Err(Error::CheckpointVersion { path: path.into(), found: meta.version, expected: VERSION });
    }

    let mut rest = Vec::new();
    f.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    let expected: usize = meta.tensors.iter().map(|(_, s)| s.iter().product::<usize>() * 4).sum();
    if rest.len() != expected {
        return Err(Error::CheckpointFormat {
            path: path.into(),
            msg: format!("tensor payload is {} bytes, expected {expected}", rest.len()),
        });
    }
    let mut tensors = BTreeMap::new();
    let mut offset = 0usize;
    for (name, shape) in &meta.tensors {
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for chunk in rest[offset..offset + count * 4].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        offset += count * 4;
        tensors.insert(name.clone(), (shape.clone(), data));
    }
    Ok(LoadedCheckpoint { meta, tensors, path: path.into() })
}
