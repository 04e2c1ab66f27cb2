//! Binary checkpoint container.
//!
//! ```text
//! "TPRRNN1\0"
//! u32 entry count
//! per entry: u32 name length, name (UTF-8), u8 order, u32 dims…, f64 data…
//! u32 token count, per token: u32 length, bytes
//! u32 config length, config JSON
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrainConfig;
use crate::encoder::Vocabulary;
use crate::model::{AblationConfig, ModelDims, ModelParams, TprRnn};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TPRRNN1\0";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint does not match its config: {0}")]
    DimMismatch(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

/// Everything needed to rebuild the model, stored as JSON in the container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub dims: ModelDims,
    pub ablation: AblationConfig,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub config: CheckpointConfig,
}

impl Checkpoint {
    pub fn new(model: &TprRnn, vocab: &Vocabulary, train: Option<TrainConfig>) -> Self {
        Self {
            params: model.params.clone(),
            vocab: vocab.clone(),
            config: CheckpointConfig {
                dims: model.dims,
                ablation: model.ablation,
                train,
            },
        }
    }

    pub fn model(&self) -> Result<TprRnn, CheckpointError> {
        TprRnn::from_params(self.config.dims, self.config.ablation, self.params.clone())
            .map_err(|e| CheckpointError::DimMismatch(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let names = ModelParams::names();
        put_u32(&mut out, names.len());
        for (name, t) in names.iter().zip(self.params.iter()) {
            put_str(&mut out, name);
            out.push(t.order() as u8);
            for &d in t.dims() {
                put_u32(&mut out, d);
            }
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        put_u32(&mut out, self.vocab.len());
        for tok in self.vocab.tokens() {
            put_str(&mut out, tok);
        }
        let json = serde_json::to_string(&self.config).expect("config serialises");
        put_str(&mut out, &json);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len(), "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let count = r.u32("entry count")?;
        let mut tensors = Vec::with_capacity(count.min(1024));
        let mut names = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            names.push(r.string("entry name")?);
            let order = r.take(1, "order")?[0] as usize;
            let dims = (0..order).map(|_| r.u32("dims")).collect::<Result<Vec<_>, _>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated("data"))?, "data")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::new(dims, data).map_err(|e| CheckpointError::Format(e.to_string()))?);
        }
        if names != ModelParams::names() {
            return Err(CheckpointError::Format("unexpected parameter names".into()));
        }
        let n_tokens = r.u32("token count")?;
        let tokens = (0..n_tokens).map(|_| r.string("token")).collect::<Result<Vec<_>, _>>()?;
        let vocab = Vocabulary::from_id_list(tokens).ok_or_else(|| CheckpointError::Format("bad vocabulary".into()))?;
        let json = r.string("config")?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let config: CheckpointConfig =
            serde_json::from_str(&json).map_err(|e| CheckpointError::Format(format!("config: {e}")))?;
        let params = ModelParams::from_vec(tensors).map_err(|e| CheckpointError::Format(e.to_string()))?;
        params
            .validate(&config.dims)
            .map_err(|e| CheckpointError::DimMismatch(e.to_string()))?;
        if vocab.len() != config.dims.vocab {
            return Err(CheckpointError::DimMismatch(format!(
                "vocabulary has {} tokens, config says {}",
                vocab.len(),
                config.dims.vocab
            )));
        }
        Ok(Self { params, vocab, config })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&u32::try_from(x).expect("fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self, what: &'static str) -> Result<String, CheckpointError> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| CheckpointError::Format(format!("{what} is not UTF-8")))
    }
}
