//! Binary checkpoints.
//!
//! Layout: magic `ELCK`, format version (u32 LE), config length (u32 LE),
//! the [`ModelConfig`] as JSON, then every tensor in declaration order as
//! row-major little-endian `f32`. A JSON manifest next to the file
//! (`<path>.json`) lists tensor names, shapes and byte offsets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{tensor_layout, Params};
use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"ELCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Serializes the model; returns the bytes and the manifest describing them.
pub fn to_bytes<T: Scalar>(model: &Model<T>) -> Result<(Vec<u8>, Manifest)> {
    let cfg = serde_json::to_vec(&model.config)?;
    let mut buf = Vec::with_capacity(12 + cfg.len() + 4 * model.params.n_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);
    let mut tensors = Vec::new();
    for t in model.params.tensors() {
        let offset = buf.len();
        for &x in t.data {
            buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: t.name,
            shape: t.shape,
            offset,
            bytes: buf.len() - offset,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        tensors,
    };
    Ok((buf, manifest))
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing ELCK header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let cfg_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cfg_end = 12 + cfg_len;
    if bytes.len() < cfg_end {
        return Err(bad("truncated config"));
    }
    let config: ModelConfig = serde_json::from_slice(&bytes[12..cfg_end])?;
    config.validate()?;
    let expected: usize = tensor_layout(&config)
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum();
    let data = &bytes[cfg_end..];
    if data.len() != 4 * expected {
        return Err(Error::Checkpoint(format!(
            "tensor data is {} bytes, config implies {}",
            data.len(),
            4 * expected
        )));
    }
    let mut params = Params::<T>::zeros(&config);
    let mut floats = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for t in params.tensors_mut() {
        for x in t.data.iter_mut() {
            *x = T::of(floats.next().expect("length checked") as f64);
        }
    }
    Ok(Model { config, params })
}

/// Writes the checkpoint atomically (temp file + rename) plus its manifest.
pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let (bytes, manifest) = to_bytes(model)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&mpath, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            d_model: 4,
            n_heads: 2,
            d_ff: 8,
            d_entity: 3,
            span_hidden: None,
            max_len: 6,
            vocab_size: 9,
            n_entities: 5,
            pad_id: 0,
            layer_norm_eps: 1e-5,
        }
    }

    #[test]
    fn roundtrip_is_exact_for_f32() {
        let m = Model::<f32>::new(cfg(), 3).unwrap();
        let (bytes, manifest) = to_bytes(&m).unwrap();
        assert_eq!(&bytes[..4], b"ELCK");
        let back: Model<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        let last = manifest.tensors.last().unwrap();
        assert_eq!(last.name, "entity_embeddings");
        assert_eq!(last.offset + last.bytes, bytes.len());
        assert_eq!(last.bytes, 5 * 3 * 4);
    }

    #[test]
    fn first_tensor_follows_header() {
        let m = Model::<f32>::new(cfg(), 3).unwrap();
        let (bytes, manifest) = to_bytes(&m).unwrap();
        let off = manifest.tensors[0].offset;
        let first = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        assert_eq!(first, m.params.token_emb[[0, 0]]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(from_bytes::<f32>(b"NOPE00000000").is_err());
        let m = Model::<f32>::new(cfg(), 3).unwrap();
        let (mut bytes, _) = to_bytes(&m).unwrap();
        bytes.pop();
        assert!(from_bytes::<f32>(&bytes).is_err());
    }

    #[test]
    fn save_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.elck");
        let m = Model::<f32>::new(cfg(), 1).unwrap();
        save(&m, &p).unwrap();
        let man: Manifest = serde_json::from_slice(&fs::read(manifest_path(&p)).unwrap()).unwrap();
        assert_eq!(man.config, cfg());
        assert_eq!(load::<f32>(&p).unwrap(), m);
    }
}
