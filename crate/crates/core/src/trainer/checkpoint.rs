//! Binary checkpoint format (little-endian):
//!
//! ```text
//! "BEMB"                 4 bytes magic
//! version u32 = 1
//! header_len u32
//! header                 UTF-8 JSON: {"config": EncoderConfig, "meta": TrainingMeta}
//! vocab hash             32 bytes, SHA-256 of the vocabulary file
//! tensors                f32, in EncoderParams::tensors() order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::tokenizer::Vocab;

pub const MAGIC: &[u8; 4] = b"BEMB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub loss: LossKind,
    pub steps: u64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub vocab_hash: [u8; 32],
    pub params: EncoderParams<f32>,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    meta: TrainingMeta,
}

impl Checkpoint {
    /// Errors unless `vocab` is the vocabulary this checkpoint was trained with.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if vocab.content_hash() != self.vocab_hash {
            return Err(Error::Format(
                "vocabulary does not match the checkpoint's vocabulary hash".into(),
            ));
        }
        self.params.check_vocab(vocab)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            meta: self.meta.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(44 + header.len() + 4 * self.params.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.vocab_hash);
        for (_, tensor) in self.params.tensors() {
            for v in tensor {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Format("checkpoint is truncated".into());
        if bytes.len() < 12 {
            return Err(truncated());
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}, expected \"BEMB\"", &bytes[..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12 + header_len;
        let hash_end = header_end + 32;
        if bytes.len() < hash_end {
            return Err(truncated());
        }
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        header.config.validate()?;
        let vocab_hash: [u8; 32] = bytes[header_end..hash_end].try_into().expect("32 bytes");

        let mut params = EncoderParams::<f32>::zeros(&header.config)?;
        let payload = &bytes[hash_end..];
        let expected = 4 * params.param_count();
        if payload.len() < expected {
            return Err(truncated());
        }
        if payload.len() > expected {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint holds {} tensor bytes, config declares {expected}",
                payload.len()
            )));
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        for tensor in params.tensors_mut() {
            for v in tensor.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("checkpoint contains NaN or infinite weights".into()));
        }
        Ok(Checkpoint {
            config: header.config,
            vocab_hash,
            params,
            meta: header.meta,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
