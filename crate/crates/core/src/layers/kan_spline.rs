//! Kolmogorov-Arnold layer with B-spline edge functions.
//!
//! Edge `(q, p)` computes `psi(x) = w_base * silu(x) + sum_k c_k * B_k(x)` on
//! input `p`; output `q` is the sum over inputs. The knot vector is uniform
//! on `grid_range` and extended by `degree` knots on each side, so there are
//! `grid_size + degree` basis functions per edge and the outermost ones keep
//! covering inputs slightly beyond the nominal range.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor, View};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub degree: usize,
    pub grid_size: usize,
    pub grid_range: [f64; 2],
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            grid_size: 5,
            grid_range: [-1.0, 1.0],
        }
    }
}

impl SplineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::invalid("spline degree must be at least 1"));
        }
        if self.grid_size < 2 {
            return Err(Error::invalid("spline grid needs at least 2 intervals"));
        }
        let [lo, hi] = self.grid_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("spline grid range must satisfy low < high"));
        }
        Ok(())
    }

    pub fn num_basis(&self) -> usize {
        self.grid_size + self.degree
    }

    /// Uniform knots extended by `degree` intervals on each side.
    pub fn knots(&self) -> Vec<f64> {
        let [lo, hi] = self.grid_range;
        let h = (hi - lo) / self.grid_size as f64;
        (0..=self.grid_size + 2 * self.degree)
            .map(|m| lo + (m as f64 - self.degree as f64) * h)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct KanSplineLayer {
    in_dim: usize,
    out_dim: usize,
    config: SplineConfig,
    knots: Vec<f64>,
    /// `base_weight [out, in]` followed by `spline_coef [out, in, num_basis]`.
    pub(crate) params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Cache {
    rows: usize,
    silu: Vec<f64>,
    silu_grad: Vec<f64>,
    basis: Vec<f64>,
    basis_grad: Vec<f64>,
}

impl KanSplineLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, config: SplineConfig) -> Result<Self> {
        config.validate()?;
        let nb = config.num_basis();
        Ok(Self {
            in_dim,
            out_dim,
            config,
            knots: config.knots(),
            params: vec![0.0; out_dim * in_dim * (1 + nb)],
        })
    }

    /// Base weights Kaiming-uniform, spline coefficients `N(0, 0.1 / sqrt(in))`.
    pub fn new(in_dim: usize, out_dim: usize, config: SplineConfig, rng: &mut Rng) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, config)?;
        let bound = 1.0 / math::sqrt(in_dim as f64);
        let split = out_dim * in_dim;
        for w in &mut layer.params[..split] {
            *w = rng.uniform_range(-bound, bound);
        }
        let scale = 0.1 / math::sqrt(in_dim as f64);
        for c in &mut layer.params[split..] {
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

    pub fn config(&self) -> &SplineConfig {
        &self.config
    }

    pub fn num_basis(&self) -> usize {
        self.config.num_basis()
    }

    pub fn param_arrays(&self) -> Vec<(&'static str, Range<usize>)> {
        let split = self.out_dim * self.in_dim;
        vec![("base_weight", 0..split), ("spline_coef", split..self.params.len())]
    }

    fn split(&self) -> usize {
        self.out_dim * self.in_dim
    }

    pub fn base_weight_mut(&mut self) -> &mut [f64] {
        let s = self.split();
        &mut self.params[..s]
    }

    pub fn spline_coef_mut(&mut self) -> &mut [f64] {
        let s = self.split();
        &mut self.params[s..]
    }

    /// Evaluates all basis functions at `x` (Cox-de Boor) and optionally
    /// their derivatives. `scratch` is reused between calls.
    pub fn basis(&self, x: f64, scratch: &mut Vec<f64>, values: &mut [f64], derivs: Option<&mut [f64]>) {
        let t = &self.knots;
        let k = self.config.degree;
        let intervals = t.len() - 1;
        scratch.clear();
        scratch.extend((0..intervals).map(|m| if x >= t[m] && x < t[m + 1] { 1.0 } else { 0.0 }));
        let mut derivs = derivs;
        for p in 1..=k {
            if p == k {
                if let Some(d) = derivs.as_deref_mut() {
                    let kf = k as f64;
                    for m in 0..values.len() {
                        d[m] = kf / (t[m + k] - t[m]) * scratch[m] - kf / (t[m + k + 1] - t[m + 1]) * scratch[m + 1];
                    }
                }
            }
            for m in 0..intervals - p {
                let left = (x - t[m]) / (t[m + p] - t[m]) * scratch[m];
                let right = (t[m + p + 1] - x) / (t[m + p + 1] - t[m + 1]) * scratch[m + 1];
                scratch[m] = left + right;
            }
        }
        values.copy_from_slice(&scratch[..values.len()]);
    }

    pub(crate) fn forward(&self, input: &Tensor, keep: bool) -> (Tensor, Option<Cache>) {
        let rows = input.rows();
        let (ni, no, nb) = (self.in_dim, self.out_dim, self.num_basis());
        let x = input.data();
        let mut silu = vec![0.0; rows * ni];
        let mut silu_grad = if keep { vec![0.0; rows * ni] } else { Vec::new() };
        let mut basis = vec![0.0; rows * ni * nb];
        let mut basis_grad = if keep { vec![0.0; rows * ni * nb] } else { Vec::new() };
        let mut scratch = Vec::with_capacity(self.knots.len());
        for idx in 0..rows * ni {
            let v = x[idx];
            silu[idx] = math::silu(v);
            let vals = &mut basis[idx * nb..(idx + 1) * nb];
            if keep {
                silu_grad[idx] = math::silu_grad(v);
                self.basis(v, &mut scratch, vals, Some(&mut basis_grad[idx * nb..(idx + 1) * nb]));
            } else {
                self.basis(v, &mut scratch, vals, None);
            }
        }
        let split = self.split();
        let mut out = vec![0.0; rows * no];
        gemm(
            1.0,
            View::new(&silu, rows, ni),
            View::new(&self.params[..split], no, ni).t(),
            0.0,
            &mut out,
        );
        gemm(
            1.0,
            View::new(&basis, rows, ni * nb),
            View::new(&self.params[split..], no, ni * nb).t(),
            1.0,
            &mut out,
        );
        let out = Tensor::matrix(rows, no, out).expect("consistent dims");
        let cache = keep.then_some(Cache {
            rows,
            silu,
            silu_grad,
            basis,
            basis_grad,
        });
        (out, cache)
    }

    pub(crate) fn backward(&self, c: &Cache, grad_out: &Tensor, grads: &mut [f64], input_grad: bool) -> Option<Tensor> {
        let (rows, ni, no, nb) = (c.rows, self.in_dim, self.out_dim, self.num_basis());
        let g = grad_out.data();
        let split = self.split();
        let (g_base, g_coef) = grads.split_at_mut(split);
        gemm(1.0, View::new(g, rows, no).t(), View::new(&c.silu, rows, ni), 1.0, g_base);
        gemm(1.0, View::new(g, rows, no).t(), View::new(&c.basis, rows, ni * nb), 1.0, g_coef);
        if !input_grad {
            return None;
        }
        let mut d_silu = vec![0.0; rows * ni];
        gemm(1.0, View::new(g, rows, no), View::new(&self.params[..split], no, ni), 0.0, &mut d_silu);
        let mut d_basis = vec![0.0; rows * ni * nb];
        gemm(
            1.0,
            View::new(g, rows, no),
            View::new(&self.params[split..], no, ni * nb),
            0.0,
            &mut d_basis,
        );
        let mut dx = vec![0.0; rows * ni];
        for idx in 0..rows * ni {
            let db = &d_basis[idx * nb..(idx + 1) * nb];
            let dd = &c.basis_grad[idx * nb..(idx + 1) * nb];
            let spline: f64 = db.iter().zip(dd).map(|(a, b)| a * b).sum();
            dx[idx] = d_silu[idx] * c.silu_grad[idx] + spline;
        }
        Some(Tensor::matrix(rows, ni, dx).expect("consistent dims"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_1x1() -> KanSplineLayer {
        KanSplineLayer::zeros(1, 1, SplineConfig::default()).unwrap()
    }

    #[test]
    fn config_validation() {
        let bad = SplineConfig {
            degree: 0,
            ..SplineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SplineConfig {
            grid_size: 1,
            ..SplineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SplineConfig {
            grid_range: [1.0, 1.0],
            ..SplineConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parameter_count_formula() {
        let l = KanSplineLayer::zeros(7, 5, SplineConfig::default()).unwrap();
        assert_eq!(l.params.len(), 7 * 5 * (5 + 3) + 7 * 5);
    }

    #[test]
    fn basis_is_partition_of_unity_inside_range() {
        let l = layer_1x1();
        let mut scratch = Vec::new();
        let mut vals = vec![0.0; l.num_basis()];
        for i in 0..=200 {
            let x = -1.0 + 2.0 * i as f64 / 200.0 - 1e-9;
            l.basis(x.max(-1.0), &mut scratch, &mut vals, None);
            let s: f64 = vals.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x} sum={s}");
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let l = KanSplineLayer::zeros(3, 2, SplineConfig::default()).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.1, -0.4, 2.0, 0.0, 0.3, -1.5]).unwrap();
        let (y, _) = l.forward(&x, false);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_rows_give_identical_outputs() {
        let mut rng = Rng::new(1);
        let l = KanSplineLayer::new(3, 4, SplineConfig::default(), &mut rng).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.2, -0.7, 1.1, 0.2, -0.7, 1.1]).unwrap();
        let (y, _) = l.forward(&x, false);
        assert_eq!(y.row(0), y.row(1));
    }

    #[test]
    fn basis_derivative_matches_difference() {
        let l = layer_1x1();
        let nb = l.num_basis();
        let mut scratch = Vec::new();
        let (mut v, mut d, mut vp, mut vm) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
        for &x in &[-1.3, -0.55, 0.07, 0.61, 1.5] {
            l.basis(x, &mut scratch, &mut v, Some(&mut d));
            let h = 1e-6;
            l.basis(x + h, &mut scratch, &mut vp, None);
            l.basis(x - h, &mut scratch, &mut vm, None);
            for m in 0..nb {
                let fd = (vp[m] - vm[m]) / (2.0 * h);
                assert!((fd - d[m]).abs() < 1e-6, "x={x} m={m} fd={fd} an={}", d[m]);
            }
        }
    }

    /// Interpolation oracle: solve for coefficients reproducing psi(x) = x at
    /// the interior knots (plus end conditions) and check the forward pass.
    #[test]
    fn identity_interpolation_at_knots() {
        let mut l = layer_1x1();
        let nb = l.num_basis();
        // Collocation points: the grid knots plus extra points to make the
        // system square (nb = 8 unknowns, 6 knots + 2 interior midpoints).
        let knots: Vec<f64> = (0..=5).map(|i| -1.0 + 0.4 * i as f64).collect();
        let mut points = knots.clone();
        points.push(-0.8);
        points.push(0.8);
        // The right end knot is excluded from the half-open support, so nudge it.
        let last = points[5] - 1e-12;
        points[5] = last;
        let mut scratch = Vec::new();
        let mut a = vec![0.0; nb * nb];
        let mut row = vec![0.0; nb];
        for (r, &x) in points.iter().enumerate() {
            l.basis(x, &mut scratch, &mut row, None);
            a[r * nb..(r + 1) * nb].copy_from_slice(&row);
        }
        let coef = solve(a, points.clone(), nb);
        l.spline_coef_mut().copy_from_slice(&coef);
        let x = Tensor::matrix(knots.len(), 1, knots.iter().map(|&k| if k == 1.0 { last } else { k }).collect()).unwrap();
        let (y, _) = l.forward(&x, false);
        for (yi, xi) in y.data().iter().zip(x.data()) {
            assert!((yi - xi).abs() < 1e-10, "{yi} vs {xi}");
        }
    }

    fn solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
                .unwrap();
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[r * n + col] / a[col * n + col];
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r * n + r];
        }
        x
    }
}
