//! Vocabulary, word embeddings and the position-weighted sentence encoder.
//!
//! A sentence of word ids `w_1..w_n` (n ≤ k) is compressed into
//! `s = Σ_i d(w_i) ⊙ p_i`, where `d` is the embedding table and `p_i` the
//! learned position vectors. The padding token has id 0 and a pinned zero
//! embedding, so padding never changes `s`.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Backend, Eager};
use crate::tensor::Tensor;

pub const PAD_ID: usize = 0;
pub const PAD_TOKEN: &str = "<pad>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("sentence has {len} tokens but the encoder supports at most {k}")]
    SentenceTooLong { len: usize, k: usize },
    #[error("token id {0} is outside the vocabulary")]
    UnknownId(usize),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Bijective token/id map with the padding token reserved at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut ids = HashMap::new();
        ids.insert(PAD_TOKEN.to_string(), PAD_ID);
        Self {
            ids,
            tokens: vec![PAD_TOKEN.to_string()],
        }
    }

    /// Vocabulary over the given tokens, ids assigned in sorted order so the
    /// mapping does not depend on iteration order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sorted: Vec<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| t != PAD_TOKEN)
            .collect();
        sorted.sort();
        sorted.dedup();
        let mut vocab = Self::new();
        for t in sorted {
            vocab.insert(&t);
        }
        vocab
    }

    /// Restores a vocabulary from its id-ordered token list.
    pub fn from_id_list(tokens: Vec<String>) -> Option<Self> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return None;
        }
        let ids: HashMap<String, usize> = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        (ids.len() == tokens.len()).then_some(Self { ids, tokens })
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>, EncoderError> {
        tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref())
                    .ok_or_else(|| EncoderError::UnknownToken(t.as_ref().to_string()))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<&str>, EncoderError> {
        ids.iter()
            .map(|&id| self.token(id).ok_or(EncoderError::UnknownId(id)))
            .collect()
    }
}

/// Embedding table (`vocab × dim_symbol`) and `k` position vectors stored as
/// the rows of a `k × dim_symbol` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embeddings: Tensor,
    pub positions: Tensor,
}

impl EncoderParams {
    pub fn vocab_size(&self) -> usize {
        self.embeddings.dims()[0]
    }

    pub fn dim_symbol(&self) -> usize {
        self.embeddings.dims()[1]
    }

    pub fn max_len(&self) -> usize {
        self.positions.dims()[0]
    }

    /// Zeros the padding row of an embedding-table gradient.
    pub fn mask_pad_grad(grad: &mut Tensor) {
        let cols = grad.dims()[1];
        grad.data_mut()[..cols].fill(0.0);
    }
}

/// Embeddings drawn from `U(-0.01, 0.01)` with a zero padding row; every
/// position entry set to `1/k`.
pub fn init_encoder<R: Rng + ?Sized>(vocab_size: usize, dim_symbol: usize, k: usize, rng: &mut R) -> EncoderParams {
    let mut emb: Vec<f64> = (0..vocab_size * dim_symbol)
        .map(|_| rng.gen_range(-0.01..=0.01))
        .collect();
    emb[..dim_symbol].fill(0.0);
    EncoderParams {
        embeddings: Tensor::matrix(vocab_size, dim_symbol, emb).expect("embedding shape"),
        positions: Tensor::filled(&[k, dim_symbol], 1.0 / k as f64).expect("position shape"),
    }
}

/// Sentence encoding on any backend. Padding ids are skipped, which is the
/// same as adding their zero embedding.
pub fn encode_with<B: Backend>(
    backend: &B,
    embeddings: &B::Value,
    positions: &B::Value,
    ids: &[usize],
) -> Result<B::Value, EncoderError> {
    let pos_dims = backend.dims(positions);
    let (k, dim) = (pos_dims[0], pos_dims[1]);
    if ids.len() > k {
        return Err(EncoderError::SentenceTooLong { len: ids.len(), k });
    }
    let vocab = backend.dims(embeddings)[0];
    let mut acc: Option<B::Value> = None;
    for (i, &id) in ids.iter().enumerate() {
        if id >= vocab {
            return Err(EncoderError::UnknownId(id));
        }
        if id == PAD_ID {
            continue;
        }
        let d = backend.gather(embeddings, id)?;
        let p = backend.gather(positions, i)?;
        let term = backend.hadamard(&d, &p)?;
        acc = Some(match acc {
            None => term,
            Some(a) => backend.add(&a, &term)?,
        });
    }
    match acc {
        Some(s) => Ok(s),
        None => Ok(backend.constant(Tensor::zeros(&[dim]).map_err(AutodiffError::from)?)?),
    }
}

pub fn encode_sentence(ids: &[usize], params: &EncoderParams) -> Result<Tensor, EncoderError> {
    encode_with(&Eager, &params.embeddings, &params.positions, ids)
}
