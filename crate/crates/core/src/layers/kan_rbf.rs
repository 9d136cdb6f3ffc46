//! Kolmogorov-Arnold layer with Gaussian radial basis edge functions:
//! `psi(x) = sum_k c_k * exp(-((x - mu_k) / h)^2)` with centers evenly spaced
//! on the grid range and `h` equal to the center spacing.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor, View};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    pub centers: usize,
    pub grid_range: [f64; 2],
}

impl Default for RbfConfig {
    fn default() -> Self {
        Self {
            centers: 8,
            grid_range: [-2.0, 2.0],
        }
    }
}

impl RbfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.centers < 2 {
            return Err(Error::invalid("rbf layer needs at least 2 centers"));
        }
        let [lo, hi] = self.grid_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("rbf grid range must satisfy low < high"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.grid_range[1] - self.grid_range[0]) / (self.centers - 1) as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.grid_range[0] + k as f64 * self.spacing()
    }
}

#[derive(Debug, Clone)]
pub struct KanRbfLayer {
    in_dim: usize,
    out_dim: usize,
    config: RbfConfig,
    /// `coef [out, in, centers]`.
    pub(crate) params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Cache {
    rows: usize,
    basis: Vec<f64>,
    basis_grad: Vec<f64>,
}

impl KanRbfLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, config: RbfConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            in_dim,
            out_dim,
            config,
            params: vec![0.0; out_dim * in_dim * config.centers],
        })
    }

    /// Coefficients `N(0, 1 / sqrt(in))`. There is no base branch, so the
    /// spline-style `0.1` factor would shrink activations layer after layer.
    pub fn new(in_dim: usize, out_dim: usize, config: RbfConfig, rng: &mut Rng) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, config)?;
        let scale = 1.0 / math::sqrt(in_dim as f64);
        for c in &mut layer.params {
            *c = scale * rng.normal();
        }
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn config(&self) -> &RbfConfig {
        &self.config
    }

    pub fn param_arrays(&self) -> Vec<(&'static str, Range<usize>)> {
        vec![("coef", 0..self.params.len())]
    }

    pub fn coef_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn forward(&self, input: &Tensor, keep: bool) -> (Tensor, Option<Cache>) {
        let rows = input.rows();
        let (ni, no, nc) = (self.in_dim, self.out_dim, self.config.centers);
        let h = self.config.spacing();
        let centers: Vec<f64> = (0..nc).map(|k| self.config.center(k)).collect();
        let x = input.data();
        let mut basis = vec![0.0; rows * ni * nc];
        let mut basis_grad = if keep { vec![0.0; rows * ni * nc] } else { Vec::new() };
        for idx in 0..rows * ni {
            let v = x[idx];
            for (k, &mu) in centers.iter().enumerate() {
                let u = (v - mu) / h;
                let b = math::exp(-u * u);
                basis[idx * nc + k] = b;
                if keep {
                    basis_grad[idx * nc + k] = -2.0 * u / h * b;
                }
            }
        }
        let mut out = vec![0.0; rows * no];
        gemm(
            1.0,
            View::new(&basis, rows, ni * nc),
            View::new(&self.params, no, ni * nc).t(),
            0.0,
            &mut out,
        );
        let out = Tensor::matrix(rows, no, out).expect("consistent dims");
        (out, keep.then_some(Cache { rows, basis, basis_grad }))
    }

    pub(crate) fn backward(&self, c: &Cache, grad_out: &Tensor, grads: &mut [f64], input_grad: bool) -> Option<Tensor> {
        let (rows, ni, no, nc) = (c.rows, self.in_dim, self.out_dim, self.config.centers);
        let g = grad_out.data();
        gemm(1.0, View::new(g, rows, no).t(), View::new(&c.basis, rows, ni * nc), 1.0, grads);
        if !input_grad {
            return None;
        }
        let mut d_basis = vec![0.0; rows * ni * nc];
        gemm(1.0, View::new(g, rows, no), View::new(&self.params, no, ni * nc), 0.0, &mut d_basis);
        let dx = (0..rows * ni)
            .map(|idx| {
                let db = &d_basis[idx * nc..(idx + 1) * nc];
                let dd = &c.basis_grad[idx * nc..(idx + 1) * nc];
                db.iter().zip(dd).map(|(a, b)| a * b).sum()
            })
            .collect();
        Some(Tensor::matrix(rows, ni, dx).expect("consistent dims"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients() {
        let l = KanRbfLayer::zeros(2, 3, RbfConfig::default()).unwrap();
        let (y, _) = l.forward(&Tensor::matrix(1, 2, vec![0.3, -1.0]).unwrap(), false);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_gaussian_at_its_center() {
        let cfg = RbfConfig::default();
        let mut l = KanRbfLayer::zeros(1, 1, cfg).unwrap();
        l.coef_mut()[3] = 1.0;
        let (y, _) = l.forward(&Tensor::matrix(1, 1, vec![cfg.center(3)]).unwrap(), false);
        assert!((y.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn far_inputs_decay() {
        let mut l = KanRbfLayer::zeros(1, 1, RbfConfig::default()).unwrap();
        l.coef_mut().iter_mut().for_each(|c| *c = 1.0);
        let (y, _) = l.forward(&Tensor::matrix(2, 1, vec![50.0, -80.0]).unwrap(), false);
        assert!(y.data().iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn parameter_count() {
        let l = KanRbfLayer::zeros(4, 6, RbfConfig::default()).unwrap();
        assert_eq!(l.params.len(), 4 * 6 * 8);
    }
}
