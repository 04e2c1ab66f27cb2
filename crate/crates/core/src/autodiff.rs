//! Tape-based reverse-mode differentiation over [`Tensor`] operations.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar output walks the tape once in reverse and
//! returns the accumulated [`Gradients`]. Tapes are cheap to create and are
//! meant to be dropped after each optimizer step.
//!
//! The [`Backend`] trait abstracts over eager evaluation ([`Eager`]) and
//! recording on a tape, so model code is written once and runs either way.

use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::tensor::{self, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("variable belongs to tape {var_tape}, used on tape {tape}")]
    CrossTape { var_tape: u64, tape: u64 },
    #[error("backward requires a scalar loss, got dims {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,
    #[error("gather index {index} out of range for table with {rows} rows")]
    GatherOutOfRange { index: usize, rows: usize },
    #[error("class index {index} out of range for {classes} logits")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("layer norm needs at least 2 entries, got {0}")]
    LayerNormTooShort(usize),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Operations shared by eager evaluation and tape recording.
pub trait Backend {
    type Value: Clone;

    fn constant(&self, t: Tensor) -> Result<Self::Value>;
    fn dims(&self, v: &Self::Value) -> Vec<usize>;
    fn add(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&self, a: &Self::Value, c: f64) -> Result<Self::Value>;
    fn hadamard(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn matvec(&self, w: &Self::Value, x: &Self::Value) -> Result<Self::Value>;
    /// `W x + b`.
    fn affine(&self, w: &Self::Value, x: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn tanh(&self, a: &Self::Value) -> Result<Self::Value>;
    fn outer2(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn outer3(&self, a: &Self::Value, b: &Self::Value, c: &Self::Value) -> Result<Self::Value>;
    fn unbind2(&self, t: &Self::Value, u: &Self::Value) -> Result<Self::Value>;
    fn unbind3(&self, f: &Self::Value, e: &Self::Value, r: &Self::Value) -> Result<Self::Value>;
    fn sum(&self, a: &Self::Value) -> Result<Self::Value>;
    fn dot(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// Layer normalisation with scalar gain and shift (each a length-1 value).
    fn layer_norm(
        &self,
        x: &Self::Value,
        gamma: &Self::Value,
        beta: &Self::Value,
        eps: f64,
    ) -> Result<Self::Value>;
    /// Row `row` of a matrix.
    fn gather(&self, table: &Self::Value, row: usize) -> Result<Self::Value>;
    /// `-log softmax(logits)[target]` as a length-1 value.
    fn softmax_xent(&self, logits: &Self::Value, target: usize) -> Result<Self::Value>;
}

/// Normalised vector and `1/sqrt(var + eps)` (population variance).
pub fn normalize(x: &Tensor, eps: f64) -> Result<(Tensor, f64)> {
    if x.len() < 2 {
        return Err(AutodiffError::LayerNormTooShort(x.len()));
    }
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    Ok((x.map("layer_norm", |v| (v - mean) * inv_std)?, inv_std))
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn layer_norm(x: &Tensor, gamma: f64, beta: f64, eps: f64) -> Result<Tensor> {
    let (normed, _) = normalize(x, eps)?;
    Ok(normed.map("layer_norm", |v| gamma * v + beta)?)
}

pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let max = logits.data().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps = logits.map("softmax", |x| (x - max).exp())?;
    let z = exps.sum();
    Ok(exps.scale(1.0 / z)?)
}

/// Returns `(loss, probs)` for softmax cross-entropy against class `target`.
pub fn softmax_xent(logits: &Tensor, target: usize) -> Result<(f64, Tensor)> {
    if target >= logits.len() {
        return Err(AutodiffError::ClassOutOfRange {
            index: target,
            classes: logits.len(),
        });
    }
    let max = logits.data().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = max + logits.data().iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    let loss = lse - logits.data()[target];
    if !loss.is_finite() {
        return Err(TensorError::NonFinite("softmax_xent").into());
    }
    Ok((loss, softmax(logits)?))
}

/// Eager evaluation: values are plain tensors and nothing is recorded.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type Value = Tensor;

    fn constant(&self, t: Tensor) -> Result<Tensor> {
        Ok(t)
    }
    fn dims(&self, v: &Tensor) -> Vec<usize> {
        v.dims().to_vec()
    }
    fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(a.add(b)?)
    }
    fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(a.sub(b)?)
    }
    fn scale(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        Ok(a.scale(c)?)
    }
    fn hadamard(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(a.hadamard(b)?)
    }
    fn matvec(&self, w: &Tensor, x: &Tensor) -> Result<Tensor> {
        Ok(tensor::matvec(w, x)?)
    }
    fn affine(&self, w: &Tensor, x: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(tensor::matvec(w, x)?.add(b)?)
    }
    fn tanh(&self, a: &Tensor) -> Result<Tensor> {
        Ok(a.tanh()?)
    }
    fn outer2(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(tensor::outer2(a, b)?)
    }
    fn outer3(&self, a: &Tensor, b: &Tensor, c: &Tensor) -> Result<Tensor> {
        Ok(tensor::outer3(a, b, c)?)
    }
    fn unbind2(&self, t: &Tensor, u: &Tensor) -> Result<Tensor> {
        Ok(tensor::unbind2(t, u)?)
    }
    fn unbind3(&self, f: &Tensor, e: &Tensor, r: &Tensor) -> Result<Tensor> {
        Ok(tensor::unbind3(f, e, r)?)
    }
    fn sum(&self, a: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(a.sum())?)
    }
    fn dot(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(a.dot(b)?)?)
    }
    fn layer_norm(&self, x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        layer_norm(x, scalar_of(gamma)?, scalar_of(beta)?, eps)
    }
    fn gather(&self, table: &Tensor, row: usize) -> Result<Tensor> {
        check_gather(table, row)?;
        Ok(table.row(row)?)
    }
    fn softmax_xent(&self, logits: &Tensor, target: usize) -> Result<Tensor> {
        Ok(Tensor::scalar(softmax_xent(logits, target)?.0)?)
    }
}

fn scalar_of(t: &Tensor) -> Result<f64> {
    t.item().ok_or_else(|| {
        TensorError::DimMismatch {
            op: "scalar",
            left: t.dims().to_vec(),
            right: vec![1],
        }
        .into()
    })
}

fn check_gather(table: &Tensor, row: usize) -> Result<()> {
    if table.order() != 2 {
        return Err(TensorError::WrongOrder {
            op: "gather",
            expected: 2,
            got: table.order(),
        }
        .into());
    }
    if row >= table.dims()[0] {
        return Err(AutodiffError::GatherOutOfRange {
            index: row,
            rows: table.dims()[0],
        });
    }
    Ok(())
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Hadamard(usize, usize),
    MatVec(usize, usize),
    Affine(usize, usize, usize),
    Tanh(usize),
    Outer2(usize, usize),
    Outer3(usize, usize, usize),
    Unbind2(usize, usize),
    Unbind3(usize, usize, usize),
    Sum(usize),
    Dot(usize, usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        normed: Tensor,
        inv_std: f64,
    },
    Gather {
        table: usize,
        row: usize,
    },
    SoftmaxXent {
        logits: usize,
        target: usize,
        probs: Tensor,
    },
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match *self {
            Op::Leaf => vec![],
            Op::Scale(a, _) | Op::Tanh(a) | Op::Sum(a) => vec![a],
            Op::Gather { table, .. } => vec![table],
            Op::SoftmaxXent { logits, .. } => vec![logits],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::MatVec(a, b)
            | Op::Outer2(a, b)
            | Op::Unbind2(a, b)
            | Op::Dot(a, b) => vec![a, b],
            Op::Affine(a, b, c) | Op::Outer3(a, b, c) | Op::Unbind3(a, b, c) => vec![a, b, c],
            Op::LayerNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in topological order. Single-threaded; use one tape
/// per thread.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn input(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Result<Tensor> {
        self.check(v)?;
        Ok(self.nodes.borrow()[v.idx].value.clone())
    }

    /// Scalar value of a length-1 variable.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.check(v)?;
        scalar_of(&self.nodes.borrow()[v.idx].value)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            idx: nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id {
            return Err(AutodiffError::CrossTape {
                var_tape: v.tape,
                tape: self.id,
            });
        }
        Ok(())
    }

    /// Appends a node computed from `inputs`. `forward` sees the input values
    /// and returns the output value plus the op record.
    fn record<F>(&self, inputs: &[Var], forward: F) -> Result<Var>
    where
        F: FnOnce(&[&Tensor]) -> Result<(Tensor, Op)>,
    {
        for &v in inputs {
            self.check(v)?;
        }
        let (value, op, requires_grad) = {
            let nodes = self.nodes.borrow();
            let values: Vec<&Tensor> = inputs.iter().map(|v| &nodes[v.idx].value).collect();
            let (value, op) = forward(&values)?;
            let requires_grad = inputs.iter().any(|v| nodes[v.idx].requires_grad);
            (value, op, requires_grad)
        };
        Ok(self.push(value, op, requires_grad))
    }

    /// Reverse pass from a scalar `loss`. Every node is visited at most once.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.idx];
        if root.value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(root.value.dims().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.idx] = Some(Tensor::scalar(1.0)?);

        for idx in (0..=loss.idx).rev() {
            let node = &nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            for (input, contribution) in vjp(&nodes, node, &g)? {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let mut grads: Vec<Option<Tensor>> = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, n)| match (g, &n.op) {
                (Some(g), Op::Leaf) if n.requires_grad => Some(g),
                _ => None,
            })
            .collect();
        // intermediate gradients are freed on the way; the seed is kept
        if grads[loss.idx].is_none() {
            grads[loss.idx] = Some(Tensor::scalar(1.0)?);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            dims: nodes.iter().map(|n| n.value.dims().to_vec()).collect(),
        })
    }
}

/// Vector-Jacobian products for one node: `(input index, dL/d input)` pairs.
fn vjp(nodes: &[Node], node: &Node, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    let val = |i: usize| &nodes[i].value;
    let out = match node.op {
        Op::Leaf => vec![],
        Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
        Op::Sub(a, b) => vec![(a, g.clone()), (b, g.scale(-1.0)?)],
        Op::Scale(a, c) => vec![(a, g.scale(c)?)],
        Op::Hadamard(a, b) => vec![(a, g.hadamard(val(b))?), (b, g.hadamard(val(a))?)],
        Op::MatVec(w, x) => vec![
            (w, tensor::outer2(g, val(x))?),
            (x, tensor::matvec_t(val(w), g)?),
        ],
        Op::Affine(w, x, b) => vec![
            (w, tensor::outer2(g, val(x))?),
            (x, tensor::matvec_t(val(w), g)?),
            (b, g.clone()),
        ],
        Op::Tanh(a) => {
            let y = &node.value;
            let data = g
                .data()
                .iter()
                .zip(y.data())
                .map(|(gi, yi)| gi * (1.0 - yi * yi))
                .collect();
            vec![(a, Tensor::new(y.dims().to_vec(), data)?)]
        }
        Op::Outer2(a, b) => vec![
            (a, tensor::matvec(g, val(b))?),
            (b, tensor::matvec_t(g, val(a))?),
        ],
        Op::Outer3(a, b, c) => vec![
            (a, tensor::contract_source(g, val(b), val(c))?),
            (b, tensor::contract_relation(g, val(a), val(c))?),
            (c, tensor::unbind3(g, val(a), val(b))?),
        ],
        Op::Unbind2(t, u) => vec![
            (t, tensor::outer2(g, val(u))?),
            (u, tensor::matvec_t(val(t), g)?),
        ],
        Op::Unbind3(f, e, r) => vec![
            (f, tensor::outer3(val(e), val(r), g)?),
            (e, tensor::contract_source(val(f), val(r), g)?),
            (r, tensor::contract_relation(val(f), val(e), g)?),
        ],
        Op::Sum(a) => {
            let g0 = scalar_of(g)?;
            vec![(a, Tensor::filled(val(a).dims(), g0)?)]
        }
        Op::Dot(a, b) => {
            let g0 = scalar_of(g)?;
            vec![(a, val(b).scale(g0)?), (b, val(a).scale(g0)?)]
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            ref normed,
            inv_std,
        } => {
            let gam = scalar_of(val(gamma))?;
            let n = normed.len() as f64;
            let g_gamma = g.dot(normed)?;
            let g_beta = g.sum();
            let g_hat = g.scale(gam)?;
            let mean_g = g_hat.sum() / n;
            let mean_gx = g_hat.dot(normed)? / n;
            let data = g_hat
                .data()
                .iter()
                .zip(normed.data())
                .map(|(gh, xh)| inv_std * (gh - mean_g - xh * mean_gx))
                .collect();
            vec![
                (x, Tensor::new(normed.dims().to_vec(), data)?),
                (gamma, Tensor::scalar(g_gamma)?),
                (beta, Tensor::scalar(g_beta)?),
            ]
        }
        Op::Gather { table, row } => {
            let t = val(table);
            let cols = t.dims()[1];
            let mut data = vec![0.0; t.len()];
            data[row * cols..(row + 1) * cols].copy_from_slice(g.data());
            vec![(table, Tensor::new(t.dims().to_vec(), data)?)]
        }
        Op::SoftmaxXent {
            logits,
            target,
            ref probs,
        } => {
            let g0 = scalar_of(g)?;
            let mut data = probs.data().to_vec();
            data[target] -= 1.0;
            for d in &mut data {
                *d *= g0;
            }
            vec![(logits, Tensor::new(probs.dims().to_vec(), data)?)]
        }
    };
    debug_assert!(out.iter().all(|(i, _)| node.op.inputs().contains(i)));
    Ok(out)
}

/// Gradients of the trainable leaves of one tape, plus the loss itself.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
    dims: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`; zeros when `v` was unreachable from the loss.
    pub fn get(&self, v: Var) -> Result<Tensor> {
        if v.tape != self.tape {
            return Err(AutodiffError::CrossTape {
                var_tape: v.tape,
                tape: self.tape,
            });
        }
        match &self.grads[v.idx] {
            Some(g) => Ok(g.clone()),
            None => Ok(Tensor::zeros(&self.dims[v.idx])?),
        }
    }
}

impl Backend for Tape {
    type Value = Var;

    fn constant(&self, t: Tensor) -> Result<Var> {
        Ok(self.input(t))
    }

    fn dims(&self, v: &Var) -> Vec<usize> {
        self.nodes.borrow()[v.idx].value.dims().to_vec()
    }

    fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(&[*a, *b], |v| Ok((v[0].add(v[1])?, Op::Add(a.idx, b.idx))))
    }

    fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(&[*a, *b], |v| Ok((v[0].sub(v[1])?, Op::Sub(a.idx, b.idx))))
    }

    fn scale(&self, a: &Var, c: f64) -> Result<Var> {
        self.record(&[*a], |v| Ok((v[0].scale(c)?, Op::Scale(a.idx, c))))
    }

    fn hadamard(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(&[*a, *b], |v| {
            Ok((v[0].hadamard(v[1])?, Op::Hadamard(a.idx, b.idx)))
        })
    }

    fn matvec(&self, w: &Var, x: &Var) -> Result<Var> {
        self.record(&[*w, *x], |v| {
            Ok((tensor::matvec(v[0], v[1])?, Op::MatVec(w.idx, x.idx)))
        })
    }

    fn affine(&self, w: &Var, x: &Var, b: &Var) -> Result<Var> {
        self.record(&[*w, *x, *b], |v| {
            let y = tensor::matvec(v[0], v[1])?.add(v[2])?;
            Ok((y, Op::Affine(w.idx, x.idx, b.idx)))
        })
    }

    fn tanh(&self, a: &Var) -> Result<Var> {
        self.record(&[*a], |v| Ok((v[0].tanh()?, Op::Tanh(a.idx))))
    }

    fn outer2(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(&[*a, *b], |v| {
            Ok((tensor::outer2(v[0], v[1])?, Op::Outer2(a.idx, b.idx)))
        })
    }

    fn outer3(&self, a: &Var, b: &Var, c: &Var) -> Result<Var> {
        self.record(&[*a, *b, *c], |v| {
            Ok((tensor::outer3(v[0], v[1], v[2])?, Op::Outer3(a.idx, b.idx, c.idx)))
        })
    }

    fn unbind2(&self, t: &Var, u: &Var) -> Result<Var> {
        self.record(&[*t, *u], |v| {
            Ok((tensor::unbind2(v[0], v[1])?, Op::Unbind2(t.idx, u.idx)))
        })
    }

    fn unbind3(&self, f: &Var, e: &Var, r: &Var) -> Result<Var> {
        self.record(&[*f, *e, *r], |v| {
            Ok((tensor::unbind3(v[0], v[1], v[2])?, Op::Unbind3(f.idx, e.idx, r.idx)))
        })
    }

    fn sum(&self, a: &Var) -> Result<Var> {
        self.record(&[*a], |v| Ok((Tensor::scalar(v[0].sum())?, Op::Sum(a.idx))))
    }

    fn dot(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(&[*a, *b], |v| {
            Ok((Tensor::scalar(v[0].dot(v[1])?)?, Op::Dot(a.idx, b.idx)))
        })
    }

    fn layer_norm(&self, x: &Var, gamma: &Var, beta: &Var, eps: f64) -> Result<Var> {
        self.record(&[*x, *gamma, *beta], |v| {
            let (normed, inv_std) = normalize(v[0], eps)?;
            let (g, b) = (scalar_of(v[1])?, scalar_of(v[2])?);
            let y = normed.map("layer_norm", |h| g * h + b)?;
            Ok((
                y,
                Op::LayerNorm {
                    x: x.idx,
                    gamma: gamma.idx,
                    beta: beta.idx,
                    normed,
                    inv_std,
                },
            ))
        })
    }

    fn gather(&self, table: &Var, row: usize) -> Result<Var> {
        self.record(&[*table], |v| {
            check_gather(v[0], row)?;
            Ok((
                v[0].row(row)?,
                Op::Gather {
                    table: table.idx,
                    row,
                },
            ))
        })
    }

    fn softmax_xent(&self, logits: &Var, target: usize) -> Result<Var> {
        self.record(&[*logits], |v| {
            let (loss, probs) = softmax_xent(v[0], target)?;
            Ok((
                Tensor::scalar(loss)?,
                Op::SoftmaxXent {
                    logits: logits.idx,
                    target,
                    probs,
                },
            ))
        })
    }
}

/// Compares tape gradients of `f` at `params` against central differences
/// `(f(θ+eps) − f(θ−eps)) / 2eps` for every parameter entry and returns the
/// worst relative error. Entries whose analytic gradient is below `1e-8` in
/// magnitude are scored by absolute error instead.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    Ok(grad_check_report(f, params, eps)?.worst)
}

/// The entry that set the worst error in a [`grad_check_report`] run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub worst: f64,
    /// Index into `params` and flat index within that tensor.
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Same comparison as [`grad_check`], also reporting where the worst error
/// occurred.
pub fn grad_check_report<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    assert!(eps > 0.0, "grad_check eps must be positive");
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    if !tape.scalar(out)?.is_finite() {
        return Err(AutodiffError::NonFiniteObjective);
    }
    let grads = tape.backward(out)?;

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let y = tape.scalar(f(&tape, &vars)?)?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(AutodiffError::NonFiniteObjective)
        }
    };

    let mut report = GradCheckReport {
        worst: 0.0,
        param: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = params.to_vec();
    for (p, &var) in vars.iter().enumerate() {
        let analytic = grads.get(var)?;
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            probe[p].data_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe[p].data_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let err = if a.abs() < 1e-8 {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / a.abs().max(numeric.abs())
            };
            if err > report.worst {
                report = GradCheckReport {
                    worst: err,
                    param: p,
                    index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
