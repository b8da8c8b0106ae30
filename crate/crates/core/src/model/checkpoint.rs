//! Checkpoint file: `SPC1`, a little-endian `u32` header length, a JSON header
//! (config plus tensor manifest), then little-endian `f32` tensor data in
//! manifest order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaceError};
use crate::math::Matrix;
use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPC1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Byte offset from the start of the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// Parameters plus free-form string metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub metadata: BTreeMap<String, String>,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &ModelParams,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let mut offset = 0;
    let tensors = params
        .tensors
        .iter()
        .map(|t| {
            let entry = TensorEntry {
                name: t.name.clone(),
                shape: [t.value.rows(), t.value.cols()],
                offset,
            };
            offset += t.value.data().len() * 4;
            entry
        })
        .collect();
    let header = Header {
        config: params.config.clone(),
        tensors,
        metadata: metadata.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header_bytes.len())
        .map_err(|_| SpaceError::Format("header too large".into()))?;

    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&header_len.to_le_bytes())?;
    w.write_all(&header_bytes)?;
    let mut buf = Vec::with_capacity(offset);
    for t in &params.tensors {
        for &v in t.value.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(SpaceError::Format(format!("bad magic {magic:?}")));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let n = e.shape[0] * e.shape[1];
        let end = e.offset + n * 4;
        let bytes = data.get(e.offset..end).ok_or_else(|| {
            SpaceError::Format(format!("tensor {} runs past end of data", e.name))
        })?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.push((e.name, Matrix::from_vec(e.shape[0], e.shape[1], values)?));
    }
    Ok(Checkpoint {
        params: ModelParams::from_tensors(header.config, tensors)?,
        metadata: header.metadata,
    })
}

impl ModelParams {
    pub fn save(&self, path: impl AsRef<Path>, metadata: &BTreeMap<String, String>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write_checkpoint(&mut w, self, metadata)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let file = std::fs::File::open(path)?;
        read_checkpoint(std::io::BufReader::new(file))
    }

    /// Rounds every parameter through `f32`, matching what a checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            for v in t.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    #[test]
    fn roundtrip_preserves_f32_values() {
        let mut p = init_model(&ModelConfig::default()).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("k".to_string(), "5".to_string());
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, &meta).unwrap();
        assert_eq!(&bytes[..4], b"SPC1");
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len]).unwrap();
        assert_eq!(header["tensors"][1]["name"], "pos_emb");
        assert_eq!(bytes.len(), 8 + header_len + 4 * p.num_parameters());

        let ck = read_checkpoint(bytes.as_slice()).unwrap();
        p.round_to_f32();
        assert_eq!(ck.params, p);
        assert_eq!(ck.metadata, meta);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let p = init_model(&ModelConfig::default()).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, &BTreeMap::new()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(SpaceError::Format(_))));
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(read_checkpoint(bytes.as_slice()), Err(SpaceError::Format(_))));
    }
}
