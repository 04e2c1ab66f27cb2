//! The recurrent TPR network: update MLPs, write/move/backlink memory
//! operations on an order-3 state, and the three-hop inference chain.
//!
//! Everything that computes is generic over [`Backend`], so the same code
//! runs eagerly for evaluation and on a [`Tape`](crate::autodiff::Tape) for
//! training.
//!
//! State layout is `F[source][relation][target]`. All three retrievals of a
//! step read the previous state and the three deltas are applied together:
//!
//! ```text
//! ŵ = F·(e1, r1)   W = e1 ⊗ r1 ⊗ (e2 − ŵ)
//! m̂ = F·(e1, r2)   M = e1 ⊗ r2 ⊗ (ŵ − m̂)
//! b̂ = F·(e2, r3)   B = e2 ⊗ r3 ⊗ (e1 − b̂)
//! F' = F + W + M + B
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{self, AutodiffError, Backend, Eager, Tape, Var};
use crate::encoder::{self, EncoderError, EncoderParams};
use crate::tensor::{Tensor, TensorError};

pub const LN_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("invalid ablation {0:?}: expected one of w, wm, wb, wmb")]
    InvalidAblation(String),
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
    #[error("story has {steps} sentences but mask has {mask} entries")]
    MaskLength { steps: usize, mask: usize },
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Autodiff(e.into())
    }
}

impl ModelError {
    /// True when the error stems from a NaN/Inf somewhere in the computation.
    pub fn is_non_finite(&self) -> bool {
        matches!(
            self,
            ModelError::Autodiff(AutodiffError::Tensor(TensorError::NonFinite(_)))
                | ModelError::Autodiff(AutodiffError::NonFiniteObjective)
                | ModelError::Encoder(EncoderError::Autodiff(AutodiffError::Tensor(TensorError::NonFinite(_))))
        )
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub symbol: usize,
    pub hidden: usize,
    pub entity: usize,
    pub relation: usize,
    /// Number of position vectors `k`.
    pub max_sentence_len: usize,
}

impl ModelDims {
    /// Single-task sizes: symbol and hidden equal the vocabulary size,
    /// 15 entity and 10 relation dimensions.
    pub fn single_task(vocab: usize, max_sentence_len: usize) -> Self {
        Self {
            vocab,
            symbol: vocab,
            hidden: vocab,
            entity: 15,
            relation: 10,
            max_sentence_len,
        }
    }

    /// All-tasks sizes: hidden 90, entity 40, relation 20.
    pub fn all_tasks(vocab: usize, max_sentence_len: usize) -> Self {
        Self {
            vocab,
            symbol: vocab,
            hidden: 90,
            entity: 40,
            relation: 20,
            max_sentence_len,
        }
    }

    pub fn state_dims(&self) -> [usize; 3] {
        [self.entity, self.relation, self.entity]
    }
}

/// Which memory operations contribute to the state update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub use_write: bool,
    pub use_move: bool,
    pub use_backlink: bool,
}

impl AblationConfig {
    pub const FULL: Self = Self {
        use_write: true,
        use_move: true,
        use_backlink: true,
    };

    pub fn new(use_write: bool, use_move: bool, use_backlink: bool) -> Result<Self> {
        if !(use_write || use_move || use_backlink) {
            return Err(ModelError::InvalidAblation(String::new()));
        }
        Ok(Self {
            use_write,
            use_move,
            use_backlink,
        })
    }
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::FULL
    }
}

impl FromStr for AblationConfig {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w" => Self::new(true, false, false),
            "wm" => Self::new(true, true, false),
            "wb" => Self::new(true, false, true),
            "wmb" => Self::new(true, true, true),
            other => Err(ModelError::InvalidAblation(other.to_string())),
        }
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        if self.use_write {
            s.push('w');
        }
        if self.use_move {
            s.push('m');
        }
        if self.use_backlink {
            s.push('b');
        }
        f.write_str(&s)
    }
}

/// The nine sentence MLPs. The first five feed the update module, the last
/// four read the question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MlpRole {
    E1,
    E2,
    R1,
    R2,
    R3,
    N,
    L1,
    L2,
    L3,
}

impl MlpRole {
    pub const ALL: [MlpRole; 9] = [
        MlpRole::E1,
        MlpRole::E2,
        MlpRole::R1,
        MlpRole::R2,
        MlpRole::R3,
        MlpRole::N,
        MlpRole::L1,
        MlpRole::L2,
        MlpRole::L3,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MlpRole::E1 => "e1",
            MlpRole::E2 => "e2",
            MlpRole::R1 => "r1",
            MlpRole::R2 => "r2",
            MlpRole::R3 => "r3",
            MlpRole::N => "q_n",
            MlpRole::L1 => "q_r1",
            MlpRole::L2 => "q_r2",
            MlpRole::L3 => "q_r3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }

    pub fn outputs_entity(self) -> bool {
        matches!(self, MlpRole::E1 | MlpRole::E2 | MlpRole::N)
    }

    pub fn output_dim(self, dims: &ModelDims) -> usize {
        if self.outputs_entity() {
            dims.entity
        } else {
            dims.relation
        }
    }
}

/// Two tanh layers: `tanh(W2 tanh(W1 s + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// Scalar gain and shift, each stored as a length-1 value.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<T> {
    pub gamma: T,
    pub beta: T,
}

/// All trainable values, generic over the value type so the same layout
/// holds tensors, tape variables or gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub embeddings: T,
    pub positions: T,
    pub mlps: Vec<Mlp<T>>,
    pub norms: Vec<LayerNormParams<T>>,
    /// Output projection, `vocab × entity`, no bias.
    pub z: T,
}

pub type ModelParams = Params<Tensor>;

pub const PARAM_COUNT: usize = 2 + 9 * 4 + 3 * 2 + 1;

impl<T> Params<T> {
    pub fn mlp(&self, role: MlpRole) -> &Mlp<T> {
        &self.mlps[role.index()]
    }

    /// Canonical ordering used by the optimizer and checkpoints.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let mut v: Vec<&T> = Vec::with_capacity(PARAM_COUNT);
        v.push(&self.embeddings);
        v.push(&self.positions);
        for m in &self.mlps {
            v.extend([&m.w1, &m.b1, &m.w2, &m.b2]);
        }
        for n in &self.norms {
            v.extend([&n.gamma, &n.beta]);
        }
        v.push(&self.z);
        v.into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        let mut v: Vec<&mut T> = Vec::with_capacity(PARAM_COUNT);
        v.push(&mut self.embeddings);
        v.push(&mut self.positions);
        for m in &mut self.mlps {
            v.extend([&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2]);
        }
        for n in &mut self.norms {
            v.extend([&mut n.gamma, &mut n.beta]);
        }
        v.push(&mut self.z);
        v.into_iter()
    }

    /// Rebuilds the structure from values in canonical order.
    pub fn from_vec(values: Vec<T>) -> Result<Self> {
        if values.len() != PARAM_COUNT {
            return Err(ModelError::Layout(format!(
                "expected {PARAM_COUNT} parameter tensors, got {}",
                values.len()
            )));
        }
        let mut it = values.into_iter();
        let mut next = || it.next().expect("length checked");
        let embeddings = next();
        let positions = next();
        let mlps = (0..9)
            .map(|_| Mlp {
                w1: next(),
                b1: next(),
                w2: next(),
                b2: next(),
            })
            .collect();
        let norms = (0..3)
            .map(|_| LayerNormParams {
                gamma: next(),
                beta: next(),
            })
            .collect();
        let z = next();
        Ok(Self {
            embeddings,
            positions,
            mlps,
            norms,
            z,
        })
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Params<U> {
        Params::from_vec(self.iter().map(f).collect()).expect("same layout")
    }

    pub fn names() -> Vec<String> {
        let mut names = vec!["embeddings".to_string(), "positions".to_string()];
        for role in MlpRole::ALL {
            for part in ["w1", "b1", "w2", "b2"] {
                names.push(format!("mlp.{}.{}", role.name(), part));
            }
        }
        for i in 1..=3 {
            names.push(format!("ln{i}.gamma"));
            names.push(format!("ln{i}.beta"));
        }
        names.push("z".to_string());
        names
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::matrix(rows, cols, data).expect("glorot shape")
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, `U(-0.01, 0.01)` embeddings with a
    /// zero padding row, `1/k` positions, unit gain and zero shift.
    pub fn init<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Self {
        let EncoderParams {
            embeddings,
            positions,
        } = encoder::init_encoder(dims.vocab, dims.symbol, dims.max_sentence_len, rng);
        let mlps = MlpRole::ALL
            .iter()
            .map(|role| {
                let out = role.output_dim(dims);
                Mlp {
                    w1: glorot(dims.hidden, dims.symbol, rng),
                    b1: Tensor::zeros(&[dims.hidden]).expect("bias"),
                    w2: glorot(out, dims.hidden, rng),
                    b2: Tensor::zeros(&[out]).expect("bias"),
                }
            })
            .collect();
        let norms = (0..3)
            .map(|_| LayerNormParams {
                gamma: Tensor::scalar(1.0).expect("gamma"),
                beta: Tensor::scalar(0.0).expect("beta"),
            })
            .collect();
        let z = glorot(dims.vocab, dims.entity, rng);
        Self {
            embeddings,
            positions,
            mlps,
            norms,
            z,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.dims()).expect("same dims"))
    }

    /// Checks every tensor against the shapes implied by `dims`.
    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        let expected = Self::shapes(dims);
        for ((name, t), want) in Self::names().iter().zip(self.iter()).zip(expected) {
            if t.dims() != want.as_slice() {
                return Err(ModelError::Layout(format!(
                    "{name}: expected {want:?}, got {:?}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn shapes(dims: &ModelDims) -> Vec<Vec<usize>> {
        let mut s = vec![
            vec![dims.vocab, dims.symbol],
            vec![dims.max_sentence_len, dims.symbol],
        ];
        for role in MlpRole::ALL {
            let out = role.output_dim(dims);
            s.extend([
                vec![dims.hidden, dims.symbol],
                vec![dims.hidden],
                vec![out, dims.hidden],
                vec![out],
            ]);
        }
        for _ in 0..3 {
            s.extend([vec![1], vec![1]]);
        }
        s.push(vec![dims.vocab, dims.entity]);
        s
    }

    pub fn encoder(&self) -> EncoderParams {
        EncoderParams {
            embeddings: self.embeddings.clone(),
            positions: self.positions.clone(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.iter().map(Tensor::len).sum()
    }
}

pub fn mlp_with<B: Backend>(b: &B, s: &B::Value, p: &Mlp<B::Value>) -> Result<B::Value> {
    let h = b.tanh(&b.affine(&p.w1, s, &p.b1)?)?;
    Ok(b.tanh(&b.affine(&p.w2, &h, &p.b2)?)?)
}

pub fn mlp_forward(s: &Tensor, p: &Mlp<Tensor>) -> Result<Tensor> {
    mlp_with(&Eager, s, p)
}

/// Entity and relation representations of one story sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReps<V> {
    pub e1: V,
    pub e2: V,
    pub r1: V,
    pub r2: V,
    pub r3: V,
}

pub fn update_reps_with<B: Backend>(b: &B, s: &B::Value, params: &Params<B::Value>) -> Result<UpdateReps<B::Value>> {
    Ok(UpdateReps {
        e1: mlp_with(b, s, params.mlp(MlpRole::E1))?,
        e2: mlp_with(b, s, params.mlp(MlpRole::E2))?,
        r1: mlp_with(b, s, params.mlp(MlpRole::R1))?,
        r2: mlp_with(b, s, params.mlp(MlpRole::R2))?,
        r3: mlp_with(b, s, params.mlp(MlpRole::R3))?,
    })
}

pub fn update_reps(s: &Tensor, params: &ModelParams) -> Result<UpdateReps<Tensor>> {
    update_reps_with(&Eager, s, params)
}

/// Write: replaces whatever `(e1, r1)` pointed at with `e2`. Returns the
/// delta and the displaced target `ŵ`.
pub fn write_delta_with<B: Backend>(
    b: &B,
    f: &B::Value,
    e1: &B::Value,
    r1: &B::Value,
    e2: &B::Value,
) -> Result<(B::Value, B::Value)> {
    let w_hat = b.unbind3(f, e1, r1)?;
    let delta = b.outer3(e1, r1, &b.sub(e2, &w_hat)?)?;
    Ok((delta, w_hat))
}

/// Move: re-files the displaced target `ŵ` under `(e1, r2)`.
pub fn move_delta_with<B: Backend>(
    b: &B,
    f: &B::Value,
    e1: &B::Value,
    r2: &B::Value,
    w_hat: &B::Value,
) -> Result<B::Value> {
    let m_hat = b.unbind3(f, e1, r2)?;
    Ok(b.outer3(e1, r2, &b.sub(w_hat, &m_hat)?)?)
}

/// Backlink: stores the reversed edge `(e2, r3) → e1`.
pub fn backlink_delta_with<B: Backend>(
    b: &B,
    f: &B::Value,
    e1: &B::Value,
    e2: &B::Value,
    r3: &B::Value,
) -> Result<B::Value> {
    let b_hat = b.unbind3(f, e2, r3)?;
    Ok(b.outer3(e2, r3, &b.sub(e1, &b_hat)?)?)
}

pub fn write_delta(f: &Tensor, e1: &Tensor, r1: &Tensor, e2: &Tensor) -> Result<(Tensor, Tensor)> {
    write_delta_with(&Eager, f, e1, r1, e2)
}

pub fn move_delta(f: &Tensor, e1: &Tensor, r2: &Tensor, w_hat: &Tensor) -> Result<Tensor> {
    move_delta_with(&Eager, f, e1, r2, w_hat)
}

pub fn backlink_delta(f: &Tensor, e1: &Tensor, e2: &Tensor, r3: &Tensor) -> Result<Tensor> {
    backlink_delta_with(&Eager, f, e1, e2, r3)
}

/// `ΔF` for one sentence, summing the enabled memory operations in the order
/// write, move, backlink. All retrievals read `f`.
pub fn delta_with<B: Backend>(
    b: &B,
    f: &B::Value,
    reps: &UpdateReps<B::Value>,
    ablation: AblationConfig,
) -> Result<B::Value> {
    let mut delta: Option<B::Value> = None;
    let mut add = |d: B::Value| -> Result<()> {
        delta = Some(match delta.take() {
            None => d,
            Some(acc) => b.add(&acc, &d)?,
        });
        Ok(())
    };
    if ablation.use_write || ablation.use_move {
        let (w, w_hat) = write_delta_with(b, f, &reps.e1, &reps.r1, &reps.e2)?;
        if ablation.use_write {
            add(w)?;
        }
        if ablation.use_move {
            add(move_delta_with(b, f, &reps.e1, &reps.r2, &w_hat)?)?;
        }
    }
    if ablation.use_backlink {
        add(backlink_delta_with(b, f, &reps.e1, &reps.e2, &reps.r3)?)?;
    }
    Ok(delta.expect("ablation enables at least one operation"))
}

pub fn step_with<B: Backend>(
    b: &B,
    f: &B::Value,
    reps: &UpdateReps<B::Value>,
    ablation: AblationConfig,
) -> Result<B::Value> {
    let delta = delta_with(b, f, reps, ablation)?;
    Ok(b.add(f, &delta)?)
}

/// One recurrent update `F_t = F_{t-1} + ΔF_t` from a raw sentence.
pub fn step(f: &Tensor, sentence: &[usize], params: &ModelParams, ablation: AblationConfig) -> Result<Tensor> {
    let s = encoder::encode_with(&Eager, &params.embeddings, &params.positions, sentence)?;
    let reps = update_reps(&s, params)?;
    step_with(&Eager, f, &reps, ablation)
}

/// The three inference hops, before the output projection.
#[derive(Debug, Clone)]
pub struct Inference<V> {
    pub hops: [V; 3],
    pub logits: V,
}

pub fn infer_with<B: Backend>(b: &B, f: &B::Value, s_q: &B::Value, params: &Params<B::Value>) -> Result<Inference<B::Value>> {
    let n = mlp_with(b, s_q, params.mlp(MlpRole::N))?;
    let l = [
        mlp_with(b, s_q, params.mlp(MlpRole::L1))?,
        mlp_with(b, s_q, params.mlp(MlpRole::L2))?,
        mlp_with(b, s_q, params.mlp(MlpRole::L3))?,
    ];
    let mut hops: Vec<B::Value> = Vec::with_capacity(3);
    let mut source = n;
    for (hop, (rel, norm)) in l.iter().zip(&params.norms).enumerate() {
        let raw = b.unbind3(f, &source, rel)?;
        let i_hat = b.layer_norm(&raw, &norm.gamma, &norm.beta, LN_EPSILON)?;
        debug_assert_eq!(hop, hops.len());
        hops.push(i_hat.clone());
        source = i_hat;
    }
    let total = b.add(&b.add(&hops[0], &hops[1])?, &hops[2])?;
    let logits = b.matvec(&params.z, &total)?;
    let hops: [B::Value; 3] = hops.try_into().unwrap_or_else(|_| unreachable!());
    Ok(Inference { hops, logits })
}

pub fn infer(f: &Tensor, question: &[usize], params: &ModelParams) -> Result<Tensor> {
    let s_q = encoder::encode_with(&Eager, &params.embeddings, &params.positions, question)?;
    Ok(infer_with(&Eager, f, &s_q, params)?.logits)
}

pub fn layer_norm(x: &Tensor, p: &LayerNormParams<Tensor>) -> Result<Tensor> {
    let gamma = p.gamma.item().ok_or_else(|| ModelError::Layout("gamma must be scalar".into()))?;
    let beta = p.beta.item().ok_or_else(|| ModelError::Layout("beta must be scalar".into()))?;
    Ok(autodiff::layer_norm(x, gamma, beta, LN_EPSILON)?)
}

/// Cross-entropy `-log softmax(logits)[answer]`.
pub fn loss(logits: &Tensor, answer: usize) -> Result<f64> {
    Ok(autodiff::softmax_xent(logits, answer)?.0)
}

/// Runs the story through the update module. `mask[t] == false` marks a
/// padding step whose delta is forced to zero.
pub fn story_state_with<B: Backend>(
    b: &B,
    dims: &ModelDims,
    params: &Params<B::Value>,
    story: &[Vec<usize>],
    mask: Option<&[bool]>,
    ablation: AblationConfig,
) -> Result<B::Value> {
    if let Some(m) = mask {
        if m.len() != story.len() {
            return Err(ModelError::MaskLength {
                steps: story.len(),
                mask: m.len(),
            });
        }
    }
    let mut f = b.constant(Tensor::zeros(&dims.state_dims())?)?;
    for (t, sentence) in story.iter().enumerate() {
        if mask.is_some_and(|m| !m[t]) {
            continue;
        }
        let s = encoder::encode_with(b, &params.embeddings, &params.positions, sentence)?;
        let reps = update_reps_with(b, &s, params)?;
        f = step_with(b, &f, &reps, ablation)?;
    }
    Ok(f)
}

pub fn logits_with<B: Backend>(
    b: &B,
    dims: &ModelDims,
    params: &Params<B::Value>,
    story: &[Vec<usize>],
    mask: Option<&[bool]>,
    question: &[usize],
    ablation: AblationConfig,
) -> Result<B::Value> {
    let f = story_state_with(b, dims, params, story, mask, ablation)?;
    let s_q = encoder::encode_with(b, &params.embeddings, &params.positions, question)?;
    Ok(infer_with(b, &f, &s_q, params)?.logits)
}

/// The network with its dimensions and memory-operation configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TprRnn {
    pub dims: ModelDims,
    pub ablation: AblationConfig,
    pub params: ModelParams,
}

/// Loss and parameter gradients for one example.
#[derive(Debug, Clone)]
pub struct SampleGrad {
    pub loss: f64,
    pub grads: ModelParams,
}

impl TprRnn {
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, ablation: AblationConfig, rng: &mut R) -> Self {
        Self {
            params: ModelParams::init(&dims, rng),
            dims,
            ablation,
        }
    }

    pub fn from_params(dims: ModelDims, ablation: AblationConfig, params: ModelParams) -> Result<Self> {
        params.validate(&dims)?;
        Ok(Self {
            dims,
            ablation,
            params,
        })
    }

    pub fn story_state(&self, story: &[Vec<usize>]) -> Result<Tensor> {
        story_state_with(&Eager, &self.dims, &self.params, story, None, self.ablation)
    }

    pub fn logits(&self, story: &[Vec<usize>], question: &[usize]) -> Result<Tensor> {
        logits_with(&Eager, &self.dims, &self.params, story, None, question, self.ablation)
    }

    pub fn predict(&self, story: &[Vec<usize>], question: &[usize]) -> Result<usize> {
        Ok(argmax(self.logits(story, question)?.data()))
    }

    pub fn loss(&self, story: &[Vec<usize>], question: &[usize], answer: usize) -> Result<f64> {
        loss(&self.logits(story, question)?, answer)
    }

    pub fn update_reps(&self, sentence: &[usize]) -> Result<UpdateReps<Tensor>> {
        let s = encoder::encode_sentence(sentence, &self.params.encoder())?;
        update_reps(&s, &self.params)
    }

    /// Representation produced by one MLP for a sentence.
    pub fn representation(&self, role: MlpRole, sentence: &[usize]) -> Result<Tensor> {
        let s = encoder::encode_sentence(sentence, &self.params.encoder())?;
        mlp_forward(&s, self.params.mlp(role))
    }

    /// Forward and backward pass on a fresh tape. The padding row of the
    /// embedding gradient is zeroed.
    pub fn loss_and_grad(
        &self,
        story: &[Vec<usize>],
        mask: Option<&[bool]>,
        question: &[usize],
        answer: usize,
    ) -> Result<SampleGrad> {
        let tape = Tape::new();
        let vars: Params<Var> = self.params.map(|t| tape.param(t.clone()));
        let logits = logits_with(&tape, &self.dims, &vars, story, mask, question, self.ablation)?;
        let loss_var = tape.softmax_xent(&logits, answer)?;
        let loss = tape.scalar(loss_var)?;
        let g = tape.backward(loss_var)?;
        let mut grads = Params::from_vec(vars.iter().map(|&v| g.get(v)).collect::<std::result::Result<Vec<_>, _>>()?)?;
        EncoderParams::mask_pad_grad(&mut grads.embeddings);
        Ok(SampleGrad { loss, grads })
    }
}

/// Worst relative error between tape gradients of the loss on one example
/// and central differences with step `eps`, over every parameter entry.
pub fn grad_check_model(model: &TprRnn, story: &[Vec<usize>], question: &[usize], answer: usize, eps: f64) -> Result<f64> {
    Ok(grad_check_model_report(model, story, question, answer, eps)?.worst)
}

/// [`grad_check_model`] with the location of the worst entry; `param`
/// indexes [`ModelParams::names`].
pub fn grad_check_model_report(
    model: &TprRnn,
    story: &[Vec<usize>],
    question: &[usize],
    answer: usize,
    eps: f64,
) -> Result<autodiff::GradCheckReport> {
    // Surfaces input errors (unknown ids, long sentences) before probing.
    model.loss(story, question, answer)?;
    let params: Vec<Tensor> = model.params.iter().cloned().collect();
    let plain = |e: ModelError| match e {
        ModelError::Autodiff(a) | ModelError::Encoder(EncoderError::Autodiff(a)) => a,
        other => panic!("inputs were validated: {other}"),
    };
    let report = autodiff::grad_check_report(
        |tape, vars| {
            let p = Params::from_vec(vars.to_vec()).map_err(plain)?;
            let logits = logits_with(tape, &model.dims, &p, story, None, question, model.ablation).map_err(plain)?;
            tape.softmax_xent(&logits, answer)
        },
        &params,
        eps,
    )?;
    Ok(report)
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
