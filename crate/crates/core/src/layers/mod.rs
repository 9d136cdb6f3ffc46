//! Layer zoo with hand-written forward and backward passes.
//!
//! Every layer keeps its trainable values in a single flat buffer; named
//! sub-ranges of that buffer (`param_arrays`) are what the model container
//! persists. Gradients use the same flat layout.

mod batch_norm;
mod kan_rbf;
mod kan_spline;
mod linear;

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

pub use batch_norm::BatchNormLayer;
pub use kan_rbf::{KanRbfLayer, RbfConfig};
pub use kan_spline::{KanSplineLayer, SplineConfig};
pub use linear::LinearLayer;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub enum Layer {
    KanSpline(KanSplineLayer),
    KanRbf(KanRbfLayer),
    Linear(LinearLayer),
    BatchNorm(BatchNormLayer),
    Relu { dim: usize },
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Context {
    KanSpline(kan_spline::Cache),
    KanRbf(kan_rbf::Cache),
    Linear { input: Tensor },
    BatchNorm(batch_norm::Cache),
    Relu { active: Vec<bool> },
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::KanSpline(_) => "kan_spline",
            Layer::KanRbf(_) => "kan_rbf",
            Layer::Linear(_) => "linear",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu { .. } => "relu",
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::KanSpline(l) => l.in_dim(),
            Layer::KanRbf(l) => l.in_dim(),
            Layer::Linear(l) => l.in_dim(),
            Layer::BatchNorm(l) => l.dim(),
            Layer::Relu { dim } => *dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::KanSpline(l) => l.out_dim(),
            Layer::KanRbf(l) => l.out_dim(),
            Layer::Linear(l) => l.out_dim(),
            Layer::BatchNorm(l) => l.dim(),
            Layer::Relu { dim } => *dim,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Layer::KanSpline(l) => &l.params,
            Layer::KanRbf(l) => &l.params,
            Layer::Linear(l) => &l.params,
            Layer::BatchNorm(l) => &l.params,
            Layer::Relu { .. } => &[],
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Layer::KanSpline(l) => &mut l.params,
            Layer::KanRbf(l) => &mut l.params,
            Layer::Linear(l) => &mut l.params,
            Layer::BatchNorm(l) => &mut l.params,
            Layer::Relu { .. } => &mut [],
        }
    }

    /// Named sub-ranges of `params()`.
    pub fn param_arrays(&self) -> Vec<(&'static str, Range<usize>)> {
        match self {
            Layer::KanSpline(l) => l.param_arrays(),
            Layer::KanRbf(l) => l.param_arrays(),
            Layer::Linear(l) => l.param_arrays(),
            Layer::BatchNorm(l) => l.param_arrays(),
            Layer::Relu { .. } => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> &[f64] {
        match self {
            Layer::BatchNorm(l) => &l.running,
            _ => &[],
        }
    }

    pub fn buffers_mut(&mut self) -> &mut [f64] {
        match self {
            Layer::BatchNorm(l) => &mut l.running,
            _ => &mut [],
        }
    }

    pub fn buffer_arrays(&self) -> Vec<(&'static str, Range<usize>)> {
        match self {
            Layer::BatchNorm(l) => l.buffer_arrays(),
            _ => Vec::new(),
        }
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode, keep: bool) -> Result<(Tensor, Option<Context>)> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "{} layer expects {} inputs, got {}",
                self.name(),
                self.in_dim(),
                input.cols()
            )));
        }
        Ok(match self {
            Layer::KanSpline(l) => {
                let (out, cache) = l.forward(input, keep);
                (out, cache.map(Context::KanSpline))
            }
            Layer::KanRbf(l) => {
                let (out, cache) = l.forward(input, keep);
                (out, cache.map(Context::KanRbf))
            }
            Layer::Linear(l) => {
                let out = l.forward(input);
                (out, keep.then(|| Context::Linear { input: input.clone() }))
            }
            Layer::BatchNorm(l) => match mode {
                Mode::Train => {
                    let (out, cache) = l.forward_train(input)?;
                    (out, keep.then_some(Context::BatchNorm(cache)))
                }
                Mode::Eval => (l.forward_eval(input), None),
            },
            Layer::Relu { .. } => {
                let mut out = input.clone();
                let mut active = Vec::new();
                if keep {
                    active.reserve(out.len());
                }
                for v in out.data_mut() {
                    let on = *v > 0.0;
                    if !on {
                        *v = 0.0;
                    }
                    if keep {
                        active.push(on);
                    }
                }
                (out, keep.then_some(Context::Relu { active }))
            }
        })
    }

    /// Pure inference pass (batch norm uses running statistics).
    pub fn forward_eval(&self, input: &Tensor) -> Tensor {
        match self {
            Layer::KanSpline(l) => l.forward(input, false).0,
            Layer::KanRbf(l) => l.forward(input, false).0,
            Layer::Linear(l) => l.forward(input),
            Layer::BatchNorm(l) => l.forward_eval(input),
            Layer::Relu { .. } => {
                let mut out = input.clone();
                for v in out.data_mut() {
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
                out
            }
        }
    }

    /// Accumulates parameter gradients into `grad_params` and returns the
    /// gradient with respect to the layer input when `input_grad` is set.
    pub fn backward(
        &self,
        ctx: &Context,
        grad_out: &Tensor,
        grad_params: &mut [f64],
        input_grad: bool,
    ) -> Result<Option<Tensor>> {
        if grad_params.len() != self.params().len() {
            return Err(Error::shape(format!(
                "{} gradient buffer has {} slots, layer has {} params",
                self.name(),
                grad_params.len(),
                self.params().len()
            )));
        }
        let mismatch = || Error::MissingForward(format!("context does not belong to a {} layer", self.name()));
        match (self, ctx) {
            (Layer::KanSpline(l), Context::KanSpline(c)) => Ok(l.backward(c, grad_out, grad_params, input_grad)),
            (Layer::KanRbf(l), Context::KanRbf(c)) => Ok(l.backward(c, grad_out, grad_params, input_grad)),
            (Layer::Linear(l), Context::Linear { input }) => Ok(l.backward(input, grad_out, grad_params, input_grad)),
            (Layer::BatchNorm(l), Context::BatchNorm(c)) => Ok(l.backward(c, grad_out, grad_params, input_grad)),
            (Layer::Relu { .. }, Context::Relu { active }) => {
                if !input_grad {
                    return Ok(None);
                }
                if active.len() != grad_out.len() {
                    return Err(Error::MissingForward("relu mask size differs from upstream gradient".into()));
                }
                let mut g = grad_out.clone();
                for (v, &on) in g.data_mut().iter_mut().zip(active) {
                    if !on {
                        *v = 0.0;
                    }
                }
                Ok(Some(g))
            }
            _ => Err(mismatch()),
        }
    }
}
