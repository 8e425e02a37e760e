//! Checkpoint archive: an 8-byte magic, the JSON header length as a
//! little-endian u64, the UTF-8 JSON header, then every parameter's values
//! as little-endian f64 in the order the header lists them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Arch, Codec, TrainedMode};
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DDJSCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub layers: usize,
    pub arch: Arch,
    pub mode: TrainedMode,
    pub seed: u64,
    /// Completed training epochs.
    pub epochs: usize,
    pub snr_range: [f64; 2],
    pub cr_range: [f64; 2],
    pub params: Vec<ParamEntry>,
}

impl CheckpointHeader {
    pub fn describe(codec: &Codec, seed: u64, epochs: usize, snr_range: [f64; 2], cr_range: [f64; 2]) -> Self {
        let store = codec.params();
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            layers: codec.layers(),
            arch: codec.arch().clone(),
            mode: codec.mode(),
            seed,
            epochs,
            snr_range,
            cr_range,
            params: store
                .ids()
                .map(|id| ParamEntry {
                    name: store.name(id).to_string(),
                    shape: store.value(id).shape().to_vec(),
                })
                .collect(),
        }
    }
}

pub fn checkpoint_bytes(codec: &Codec, header: &CheckpointHeader) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let store = codec.params();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * store.total_elements());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for entry in &header.params {
        let id = store
            .id(&entry.name)
            .ok_or_else(|| Error::Checkpoint(format!("header names unknown parameter {}", entry.name)))?;
        for v in store.value(id).data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(Codec, CheckpointHeader)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint archive"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body])?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.layers != header.arch.layers {
        return Err(bad("layer count disagrees with architecture"));
    }
    let mut store = ParamStore::new();
    let mut pos = body;
    for entry in &header.params {
        let n: usize = entry.shape.iter().product();
        let end = pos + 8 * n;
        if end > bytes.len() {
            return Err(Error::Checkpoint(format!("truncated data for {}", entry.name)));
        }
        let data = bytes[pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.add(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
        pos = end;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after parameter data"));
    }
    let codec = Codec::from_parts(header.arch.clone(), store, header.mode)?;
    Ok((codec, header))
}

pub fn write_checkpoint(path: &Path, codec: &Codec, header: &CheckpointHeader) -> Result<()> {
    fs::write(path, checkpoint_bytes(codec, header)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(Codec, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
