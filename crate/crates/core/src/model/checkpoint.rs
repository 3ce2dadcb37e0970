//! Binary checkpoint: `MLNS` magic, u32 LE version, u32 LE header length,
//! UTF-8 JSON header, then little-endian binary32 tensor payloads (row-major).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ParamLayout, Params};
use crate::corpus::FormatSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MLNS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iteration: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub format: Option<FormatSpec>,
    /// Metric snapshot at save time, e.g. `id_acc`.
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    iteration: u64,
    rng_seed: u64,
    #[serde(default)]
    format: Option<FormatSpec>,
    #[serde(default)]
    metrics: BTreeMap<String, f64>,
    tensors: Vec<TensorRecord>,
}

pub fn encode_checkpoint(params: &Params<f32>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = Header {
        config: params.config,
        iteration: meta.iteration,
        rng_seed: meta.rng_seed,
        format: meta.format,
        metrics: meta.metrics.clone(),
        tensors: params
            .layout
            .entries
            .iter()
            .map(|e| TensorRecord {
                name: e.name.clone(),
                shape: e.shape.clone(),
                offset: e.offset * 4,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + params.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, params: &Params<f32>, meta: &CheckpointMeta) -> Result<()> {
    let bytes = encode_checkpoint(params, meta)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::CheckpointTruncated(format!("file ends inside the preamble at byte {at}")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Params<f32>, CheckpointMeta)> {
    if bytes.len() < 4 {
        return Err(Error::CheckpointTruncated("file shorter than the magic".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::CheckpointVersion(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::CheckpointVersion(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_bytes = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| Error::CheckpointTruncated("file ends inside the JSON header".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    header.config.validate()?;

    let layout = ParamLayout::new(&header.config);
    if header.tensors.len() != layout.entries.len() {
        return Err(Error::CheckpointShape {
            tensor: "<directory>".into(),
            expected: vec![layout.entries.len()],
            found: vec![header.tensors.len()],
        });
    }
    let payload = &bytes[12 + header_len..];
    let mut params = Params::<f32>::zeros(&header.config);
    for (record, entry) in header.tensors.iter().zip(&layout.entries) {
        if record.name != entry.name || record.shape != entry.shape {
            return Err(Error::CheckpointShape {
                tensor: record.name.clone(),
                expected: entry.shape.clone(),
                found: record.shape.clone(),
            });
        }
        let data = payload
            .get(record.offset..record.offset + entry.len * 4)
            .ok_or_else(|| {
                Error::CheckpointTruncated(format!("payload of `{}` is incomplete", record.name))
            })?;
        for (dst, chunk) in params.values[entry.range()]
            .iter_mut()
            .zip(data.chunks_exact(4))
        {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    let meta = CheckpointMeta {
        iteration: header.iteration,
        rng_seed: header.rng_seed,
        format: header.format,
        metrics: header.metrics,
    };
    Ok((params, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<(Params<f32>, ModelConfig, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (params, meta) = decode_checkpoint(&bytes)?;
    let config = params.config;
    Ok((params, config, meta))
}

/// Loads a checkpoint and requires its tensors to have the shapes `expected` implies.
pub fn load_checkpoint_for(
    path: &Path,
    expected: &ModelConfig,
) -> Result<(Params<f32>, CheckpointMeta)> {
    let (params, config, meta) = load_checkpoint(path)?;
    let want = ParamLayout::new(expected);
    for (have, want) in params.layout.entries.iter().zip(&want.entries) {
        if have.name != want.name || have.shape != want.shape {
            return Err(Error::CheckpointShape {
                tensor: want.name.clone(),
                expected: want.shape.clone(),
                found: have.shape.clone(),
            });
        }
    }
    if params.layout.entries.len() != want.entries.len() {
        return Err(Error::CheckpointShape {
            tensor: "<directory>".into(),
            expected: vec![want.entries.len()],
            found: vec![params.layout.entries.len()],
        });
    }
    if config != *expected {
        // Same shapes but different non-shape fields (e.g. dropout).
        return Err(Error::Config(format!(
            "checkpoint config {config:?} differs from expected {expected:?}"
        )));
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            iteration: 7,
            rng_seed: 11,
            format: Some(FormatSpec::addition()),
            metrics: [("id_acc".to_string(), 0.5)].into_iter().collect(),
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
        let bytes = encode_checkpoint(&p, &meta()).unwrap();
        assert_eq!(&bytes[..4], b"MLNS");
        let (q, m) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(m, meta());
        assert!(p.values.iter().zip(&q.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
        let mut bytes = encode_checkpoint(&p, &meta()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::CheckpointVersion(_))));
        let mut bytes = encode_checkpoint(&p, &meta()).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::CheckpointVersion(_))));
    }

    #[test]
    fn truncation_is_detected() {
        let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
        let bytes = encode_checkpoint(&p, &meta()).unwrap();
        for cut in [2, 10, 40, bytes.len() - 1] {
            assert!(
                matches!(decode_checkpoint(&bytes[..cut]), Err(Error::CheckpointTruncated(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn wrong_preset_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mul.ckpt");
        let p = Params::<f32>::init(&ModelConfig::multiplication(), 0).unwrap();
        save_checkpoint(&path, &p, &meta()).unwrap();
        match load_checkpoint_for(&path, &ModelConfig::addition()) {
            Err(Error::CheckpointShape { tensor, .. }) => assert_eq!(tensor, "wte"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
