//! Binary checkpoint container.
//!
//! Layout: `AGCK`, little-endian u32 version, u64 header length, a JSON
//! header, then every tensor as little-endian f64 in [`Params::tensors`] order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{ModelConfig, Params};
use super::{ModelError, TransformerModel};

const MAGIC: &[u8; 4] = b"AGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_hash: String,
    tensors: Vec<(String, usize)>,
    meta: serde_json::Value,
}

/// A model plus free-form metadata (training config, epoch, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: TransformerModel,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.model.params.tensors();
        let header = Header {
            config: self.model.config,
            vocab_hash: self.model.vocab_hash.clone(),
            tensors: tensors.iter().map(|(n, t)| (n.clone(), t.len())).collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let body: usize = tensors.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + json.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for x in t.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        bytes.read_exact(&mut word).map_err(|_| bad("truncated version"))?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        bytes.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
        let len = u64::from_le_bytes(len) as usize;
        if bytes.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&bytes[..len]).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        bytes = &bytes[len..];
        header.config.validate()?;

        let mut params = Params::zeros(&header.config);
        let expected: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
        if expected != header.tensors {
            return Err(bad("tensor table does not match config"));
        }
        let total: usize = expected.iter().map(|(_, n)| n * 8).sum();
        if bytes.len() != total {
            return Err(bad("tensor data length mismatch"));
        }
        let mut chunks = bytes.chunks_exact(8);
        for t in params.tensors_mut() {
            for x in t.iter_mut() {
                let c = chunks.next().expect("length checked");
                *x = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
            }
        }
        Ok(Self {
            model: TransformerModel {
                config: header.config,
                params,
                vocab_hash: header.vocab_hash,
            },
            meta: header.meta,
        })
    }

    /// Writes the checkpoint and returns the sha256 of the written bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String, ModelError> {
        let bytes = self.to_bytes();
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// sha256 of a checkpoint file on disk.
    pub fn file_hash(path: impl AsRef<Path>) -> Result<String, ModelError> {
        Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut cfg = ModelConfig::desk(20);
        cfg.embed_dim = 8;
        cfg.n_heads = 2;
        let model = TransformerModel::new(cfg, "abc", &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let ck = Checkpoint {
            model,
            meta: serde_json::json!({"epoch": 3}),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let h = ck.save(&path).unwrap();
        assert_eq!(h, Checkpoint::file_hash(&path).unwrap());
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        for ((_, a), (_, b)) in back.model.params.tensors().iter().zip(ck.model.params.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let mut cfg = ModelConfig::desk(10);
        cfg.embed_dim = 4;
        cfg.n_heads = 1;
        let ck = Checkpoint {
            model: TransformerModel::zeroed(cfg, "h").unwrap(),
            meta: serde_json::Value::Null,
        };
        let mut bytes = ck.to_bytes();
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
