//! Checkpoint container.
//!
//! ```text
//! "BIANCKPT"                      8-byte magic
//! u32 version (1)
//! u32 node_dim
//! u32 config_len, config text     key=value lines, UTF-8
//! u32 count                       number of tensors
//! count × { u32 name_len, name, u32 rows, u32 cols, rows·cols × f64 }
//! ```
//!
//! All integers and floats are little-endian; tensors appear in name order
//! and payloads are row-major.

use std::path::Path;

use super::{BianModel, ModelConfig, ParamStore};
use crate::data::with_path;
use crate::error::{BianError, Result};
use crate::tensor::Tensor;

pub const CKPT_MAGIC: &[u8; 8] = b"BIANCKPT";
pub const CKPT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &BianModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    put_u32(&mut out, CKPT_VERSION);
    put_u32(&mut out, model.node_dim() as u32);
    let cfg = model.config().to_kv();
    put_u32(&mut out, cfg.len() as u32);
    out.extend_from_slice(cfg.as_bytes());
    put_u32(&mut out, model.params().len() as u32);
    for (name, t) in model.params() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rows() as u32);
        put_u32(&mut out, t.cols() as u32);
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<BianModel> {
    let mut pos = 0usize;
    let mut take = |len: usize, what: &str| -> Result<&[u8]> {
        if bytes.len() - pos < len {
            return Err(BianError::Checkpoint(format!("truncated {what} at offset {pos}")));
        }
        let s = &bytes[pos..pos + len];
        pos += len;
        Ok(s)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;

    if take(8, "magic")? != CKPT_MAGIC {
        return Err(BianError::Checkpoint("bad magic at offset 0".into()));
    }
    let version = u32_at(take(4, "version")?);
    if version != CKPT_VERSION as usize {
        return Err(BianError::Checkpoint(format!("unsupported version {version} at offset 8")));
    }
    let node_dim = u32_at(take(4, "node_dim")?);
    let cfg_len = u32_at(take(4, "config length")?);
    let cfg_text = std::str::from_utf8(take(cfg_len, "config")?)
        .map_err(|_| BianError::Checkpoint("config text is not UTF-8".into()))?;
    let config = ModelConfig::from_kv(cfg_text)?;
    let count = u32_at(take(4, "tensor count")?);
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = u32_at(take(4, "name length")?);
        let name = std::str::from_utf8(take(name_len, "name")?)
            .map_err(|_| BianError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = u32_at(take(4, "rows")?);
        let cols = u32_at(take(4, "cols")?);
        let len = rows
            .checked_mul(cols)
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| BianError::Checkpoint(format!("tensor {name} is too large")))?;
        let data =
            take(len, "tensor payload")?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if params.insert(name.clone(), Tensor::new(rows, cols, data)?).is_some() {
            return Err(BianError::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    if pos != bytes.len() {
        return Err(BianError::Checkpoint(format!("{} trailing bytes at offset {pos}", bytes.len() - pos)));
    }
    BianModel::from_parts(config, node_dim, params)
}

pub fn save_checkpoint(model: &BianModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| with_path(e, path))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BianModel> {
    let path = path.as_ref();
    decode_checkpoint(&std::fs::read(path).map_err(|e| with_path(e, path))?)
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EdgeMode;

    #[test]
    fn round_trip_is_bit_exact() {
        for mode in [EdgeMode::Timestamp, EdgeMode::EdgeAttr, EdgeMode::TimeConditioned] {
            let cfg = ModelConfig { edge_mode: mode, lr: 3e-4, rng_seed: 17, ..ModelConfig::default() };
            let model = BianModel::new(cfg, 5).unwrap();
            let bytes = encode_checkpoint(&model);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let bytes = encode_checkpoint(&BianModel::new(ModelConfig::default(), 2).unwrap());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(decode_checkpoint(&bad).is_err());
        let mut long = bytes;
        long.push(1);
        assert!(decode_checkpoint(&long).is_err());
    }
}
