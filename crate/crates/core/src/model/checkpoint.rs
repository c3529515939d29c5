//! Checkpoint container:
//!
//! ```text
//! b"DCNCKPT1" | u64 LE metadata length | JSON metadata | f32 LE tensors
//! ```
//!
//! Tensors follow the order listed in the metadata, each row-major.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dcn::{DcnConfig, DcnParams};
use super::train::{DcnModel, GroupScaler};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DCNCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    config: DcnConfig,
    worker_ids: Vec<String>,
    group_scaler: GroupScaler,
    feature_hashes: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &DcnModel) -> Result<Vec<u8>> {
    let meta = Metadata {
        config: model.config.clone(),
        worker_ids: model.worker_ids().to_vec(),
        group_scaler: model.scaler,
        feature_hashes: model.feature_hashes.clone(),
        tensors: model.params.manifest().into_iter().map(|(name, shape)| TensorEntry { name, shape }).collect(),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.params.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.params.tensors() {
        for &v in t {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<DcnModel> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing DCNCKPT1 magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated metadata"))?;
    let meta: Metadata = serde_json::from_slice(body)?;
    let mut params = DcnParams::zeros(&meta.config);
    let expected: Vec<(String, Vec<usize>)> = meta.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    if expected != params.manifest() {
        return Err(bad("tensor manifest does not match the configuration"));
    }
    let mut data = &bytes[16 + len..];
    for t in params.tensors_mut() {
        let need = t.len() * 4;
        if data.len() < need {
            return Err(bad("truncated tensor data"));
        }
        for (v, c) in t.iter_mut().zip(data[..need].chunks_exact(4)) {
            *v = f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        }
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensors"));
    }
    let mut model = DcnModel::new(meta.config, params, meta.worker_ids, meta.group_scaler)?;
    model.feature_hashes = meta.feature_hashes;
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &DcnModel) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DcnModel> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn round_trip_after_rounding() {
        let cfg = DcnConfig { deep_widths: vec![4, 3], ..DcnConfig::new(2, 2) };
        let params = DcnParams::glorot(&cfg, &mut stream(3));
        let scaler = GroupScaler { age_mean: 30.0, age_sd: 5.0, days_mean: 2.0, days_sd: 1.5 };
        let mut m = DcnModel::new(cfg, params, vec!["a".into(), "b".into()], scaler).unwrap();
        m.feature_hashes.insert("embeddings".into(), "abc".into());
        m.round_to_storage();
        let bytes = encode_checkpoint(&m).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let cfg = DcnConfig { deep_widths: vec![2], ..DcnConfig::new(1, 1) };
        let scaler = GroupScaler { age_mean: 0.0, age_sd: 1.0, days_mean: 0.0, days_sd: 1.0 };
        let m = DcnModel::zeros(cfg, vec!["a".into()], scaler).unwrap();
        let bytes = encode_checkpoint(&m).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode_checkpoint(&magic).is_err());
    }
}
