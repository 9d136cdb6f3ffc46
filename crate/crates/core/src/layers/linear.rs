use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::math;
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor, View};

/// Affine layer `y = x W^T + b` with `W [out, in]`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    in_dim: usize,
    out_dim: usize,
    /// `weight [out, in]` followed by `bias [out]`.
    pub(crate) params: Vec<f64>,
}

impl LinearLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            params: vec![0.0; out_dim * in_dim + out_dim],
        }
    }

    /// Kaiming-uniform weights and bias with bound `1 / sqrt(fan_in)`.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        let bound = 1.0 / math::sqrt(in_dim.max(1) as f64);
        for w in &mut layer.params {
            *w = rng.uniform_range(-bound, bound);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_arrays(&self) -> Vec<(&'static str, Range<usize>)> {
        let split = self.out_dim * self.in_dim;
        vec![("weight", 0..split), ("bias", split..self.params.len())]
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        let split = self.out_dim * self.in_dim;
        &mut self.params[..split]
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        let split = self.out_dim * self.in_dim;
        &mut self.params[split..]
    }

    pub(crate) fn forward(&self, input: &Tensor) -> Tensor {
        let rows = input.rows();
        let (ni, no) = (self.in_dim, self.out_dim);
        let split = no * ni;
        let bias = &self.params[split..];
        let mut out = Vec::with_capacity(rows * no);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm(
            1.0,
            View::new(input.data(), rows, ni),
            View::new(&self.params[..split], no, ni).t(),
            1.0,
            &mut out,
        );
        Tensor::matrix(rows, no, out).expect("consistent dims")
    }

    pub(crate) fn backward(&self, input: &Tensor, grad_out: &Tensor, grads: &mut [f64], input_grad: bool) -> Option<Tensor> {
        let rows = input.rows();
        let (ni, no) = (self.in_dim, self.out_dim);
        let split = no * ni;
        let g = grad_out.data();
        let (gw, gb) = grads.split_at_mut(split);
        gemm(1.0, View::new(g, rows, no).t(), View::new(input.data(), rows, ni), 1.0, gw);
        for r in 0..rows {
            for (b, &v) in gb.iter_mut().zip(&g[r * no..(r + 1) * no]) {
                *b += v;
            }
        }
        if !input_grad {
            return None;
        }
        let mut dx = vec![0.0; rows * ni];
        gemm(1.0, View::new(g, rows, no), View::new(&self.params[..split], no, ni), 0.0, &mut dx);
        Some(Tensor::matrix(rows, ni, dx).expect("consistent dims"))
    }
}
