use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

pub const MOMENTUM: f64 = 0.1;
pub const EPS: f64 = 1e-5;

/// Per-feature batch normalization with learnable scale and shift.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    dim: usize,
    /// `gamma [dim]` followed by `beta [dim]`.
    pub(crate) params: Vec<f64>,
    /// `running_mean [dim]` followed by `running_var [dim]`.
    pub(crate) running: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Cache {
    rows: usize,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(dim: usize) -> Self {
        let mut params = vec![0.0; 2 * dim];
        params[..dim].iter_mut().for_each(|g| *g = 1.0);
        let mut running = vec![0.0; 2 * dim];
        running[dim..].iter_mut().for_each(|v| *v = 1.0);
        Self { dim, params, running }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_arrays(&self) -> Vec<(&'static str, Range<usize>)> {
        vec![("gamma", 0..self.dim), ("beta", self.dim..2 * self.dim)]
    }

    pub fn buffer_arrays(&self) -> Vec<(&'static str, Range<usize>)> {
        vec![("running_mean", 0..self.dim), ("running_var", self.dim..2 * self.dim)]
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running[..self.dim]
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running[self.dim..]
    }

    pub(crate) fn forward_train(&mut self, input: &Tensor) -> Result<(Tensor, Cache)> {
        let rows = input.rows();
        if rows < 2 {
            return Err(Error::invalid(format!(
                "batch normalization in train mode needs a batch of at least 2 rows, got {rows}"
            )));
        }
        let d = self.dim;
        let x = input.data();
        let mut mean = vec![0.0; d];
        for r in 0..rows {
            for (m, &v) in mean.iter_mut().zip(&x[r * d..(r + 1) * d]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; d];
        for r in 0..rows {
            for c in 0..d {
                let e = x[r * d + c] - mean[c];
                var[c] += e * e;
            }
        }
        var.iter_mut().for_each(|v| *v /= rows as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + EPS)).collect();
        let mut normalized = vec![0.0; rows * d];
        let mut out = vec![0.0; rows * d];
        let (gamma, beta) = self.params.split_at(d);
        for r in 0..rows {
            for c in 0..d {
                let i = r * d + c;
                normalized[i] = (x[i] - mean[c]) * inv_std[c];
                out[i] = gamma[c] * normalized[i] + beta[c];
            }
        }
        let unbias = rows as f64 / (rows - 1) as f64;
        let (rm, rv) = self.running.split_at_mut(d);
        for c in 0..d {
            rm[c] = (1.0 - MOMENTUM) * rm[c] + MOMENTUM * mean[c];
            rv[c] = (1.0 - MOMENTUM) * rv[c] + MOMENTUM * var[c] * unbias;
        }
        Ok((
            Tensor::matrix(rows, d, out).expect("consistent dims"),
            Cache {
                rows,
                normalized,
                inv_std,
            },
        ))
    }

    pub(crate) fn forward_eval(&self, input: &Tensor) -> Tensor {
        let rows = input.rows();
        let d = self.dim;
        let (gamma, beta) = self.params.split_at(d);
        let (rm, rv) = self.running.split_at(d);
        let scale: Vec<f64> = (0..d).map(|c| gamma[c] / math::sqrt(rv[c] + EPS)).collect();
        let mut out = input.data().to_vec();
        for r in 0..rows {
            for c in 0..d {
                let i = r * d + c;
                out[i] = (out[i] - rm[c]) * scale[c] + beta[c];
            }
        }
        Tensor::matrix(rows, d, out).expect("consistent dims")
    }

    pub(crate) fn backward(&self, c: &Cache, grad_out: &Tensor, grads: &mut [f64], input_grad: bool) -> Option<Tensor> {
        let (rows, d) = (c.rows, self.dim);
        let g = grad_out.data();
        let mut sum_g = vec![0.0; d];
        let mut sum_gx = vec![0.0; d];
        for r in 0..rows {
            for k in 0..d {
                let i = r * d + k;
                sum_g[k] += g[i];
                sum_gx[k] += g[i] * c.normalized[i];
            }
        }
        for k in 0..d {
            grads[k] += sum_gx[k];
            grads[d + k] += sum_g[k];
        }
        if !input_grad {
            return None;
        }
        let gamma = &self.params[..d];
        let n = rows as f64;
        let mut dx = vec![0.0; rows * d];
        for r in 0..rows {
            for k in 0..d {
                let i = r * d + k;
                dx[i] = gamma[k] * c.inv_std[k] / n * (n * g[i] - sum_g[k] - c.normalized[i] * sum_gx[k]);
            }
        }
        Some(Tensor::matrix(rows, d, dx).expect("consistent dims"))
    }
}
