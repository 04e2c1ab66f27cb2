//! Nadam and the training schedule: a reduced-rate warm-up, NaN-triggered
//! reinitialisation during warm-up, and a single learning-rate halving once
//! the validation loss drops below a threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(usize),
    #[error("update produced a non-finite value in parameter {0}")]
    NonFiniteUpdate(usize),
    #[error("parameter {index} has dims {param:?} but its gradient has {grad:?}")]
    DimMismatch {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("got {grads} gradients for {params} parameters")]
    CountMismatch { params: usize, grads: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl NadamConfig {
    /// lr 0.008, β₁ 0.6, β₂ 0.4.
    pub const SINGLE_TASK: Self = Self {
        lr: 0.008,
        beta1: 0.6,
        beta2: 0.4,
        eps: 1e-8,
    };

    /// lr 0.001, β₁ 0.9, β₂ 0.999.
    pub const ALL_TASKS: Self = Self {
        lr: 0.001,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

/// Moment estimates and step count. `m` and `v` are created lazily on the
/// first step to mirror the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Nadam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Nadam {
    pub fn new(config: &NadamConfig) -> Self {
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn reset(&mut self) {
        self.step_count = 0;
        self.m.clear();
        self.v.clear();
    }

    /// One update with learning rate `lr`:
    ///
    /// ```text
    /// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
    /// m̂ = m/(1−β₁ᵗ)            v̂ = v/(1−β₂ᵗ)
    /// θ ← θ − lr·(β₁m̂ + (1−β₁)g/(1−β₁ᵗ)) / (√v̂ + ε)
    /// ```
    ///
    /// Gradients are validated before anything is modified.
    pub fn step<'p, 'g, P, G>(&mut self, params: P, grads: G, lr: f64) -> Result<(), OptimError>
    where
        P: IntoIterator<Item = &'p mut Tensor>,
        G: IntoIterator<Item = &'g Tensor>,
    {
        let mut params: Vec<&mut Tensor> = params.into_iter().collect();
        let grads: Vec<&Tensor> = grads.into_iter().collect();
        if params.len() != grads.len() {
            return Err(OptimError::CountMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.dims() != g.dims() {
                return Err(OptimError::DimMismatch {
                    index: i,
                    param: p.dims().to_vec(),
                    grad: g.dims().to_vec(),
                });
            }
            if g.data().iter().any(|x| !x.is_finite()) {
                return Err(OptimError::NonFiniteGradient(i));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.dims()).expect("param dims")).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() {
            return Err(OptimError::CountMismatch {
                params: params.len(),
                grads: self.m.len(),
            });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);

        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let theta = p.data_mut();
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let num = b1 * m_hat + (1.0 - b1) * g[j] / bc1;
                theta[j] -= lr * num / (v_hat.sqrt() + self.eps);
            }
            if theta.iter().any(|x| !x.is_finite()) {
                return Err(OptimError::NonFiniteUpdate(i));
            }
        }
        Ok(())
    }
}

/// Learning-rate schedule. Steps are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub warmup_factor: f64,
    pub halve_threshold: f64,
    pub halve_factor: f64,
    halved: bool,
}

impl Schedule {
    /// 50 warm-up steps at a tenth of `base_lr`; halve once when the
    /// validation loss falls below 0.1.
    pub fn new(base_lr: f64) -> Self {
        Self {
            base_lr,
            warmup_steps: 50,
            warmup_factor: 0.1,
            halve_threshold: 0.1,
            halve_factor: 0.5,
            halved: false,
        }
    }

    pub fn halved(&self) -> bool {
        self.halved
    }

    pub fn in_warmup(&self, step: u64) -> bool {
        step <= self.warmup_steps
    }

    /// Records a validation loss; latches the halving the first time it is
    /// below the threshold. Returns true if this call triggered it.
    pub fn observe_validation(&mut self, val_loss: f64) -> bool {
        if !self.halved && val_loss < self.halve_threshold {
            self.halved = true;
            return true;
        }
        false
    }

    /// Rate for `step` given the best validation loss seen so far.
    pub fn effective_lr(&self, step: u64, best_val_loss: Option<f64>) -> f64 {
        if self.in_warmup(step) {
            return self.base_lr * self.warmup_factor;
        }
        let halve = self.halved || best_val_loss.is_some_and(|l| l < self.halve_threshold);
        if halve {
            self.base_lr * self.halve_factor
        } else {
            self.base_lr
        }
    }

    pub fn reset(&mut self) {
        self.halved = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NanAction {
    /// Re-draw all parameters with the next seed, reset the optimizer and
    /// restart the warm-up.
    Reinitialize,
    /// Stop the run.
    Abort,
}

/// Reinitialise if the non-finite value appeared during warm-up, abort
/// otherwise.
pub fn nan_policy(step: u64, schedule: &Schedule) -> NanAction {
    if schedule.in_warmup(step) {
        NanAction::Reinitialize
    } else {
        NanAction::Abort
    }
}
