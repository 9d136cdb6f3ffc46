use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

use super::CoalitionMask;

/// Shapley kernel `(n - 1) / (C(n, s) * s * (n - s))` for `1 <= s <= n - 1`.
pub fn shapley_kernel_weight(n: usize, s: usize) -> Result<f64> {
    if n < 2 || s == 0 || s >= n {
        return Err(Error::invalid(format!(
            "kernel weight is infinite or undefined for s = {s}, n = {n}"
        )));
    }
    let (nf, sf) = (n as f64, s as f64);
    if n > 30 {
        let ln_w = math::ln(nf - 1.0) - math::ln_binomial(n, s) - math::ln(sf) - math::ln(nf - sf);
        Ok(math::exp(ln_w))
    } else {
        Ok((nf - 1.0) / (math::binomial(n, s) * sf * (nf - sf)))
    }
}

/// Probability of each coalition size `s = 1..n-1` under kernel-weighted
/// sampling: `p(s) ∝ (n - 1) / (s (n - s))`. Index 0 holds `s = 1`.
pub fn size_probabilities(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid(format!("coalition sampling needs n >= 2, got {n}")));
    }
    let raw: Vec<f64> = (1..n).map(|s| 1.0 / (s as f64 * (n - s) as f64)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Draws coalitions with probability proportional to the Shapley kernel:
/// a size first, then a uniform subset of that size.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    n: usize,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    rng: Rng,
}

impl KernelSampler {
    pub fn new(n: usize, rng: Rng) -> Result<Self> {
        let probs = size_probabilities(n)?;
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self { n, probs, cumulative, rng })
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn size_probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample_size(&mut self) -> usize {
        let u = self.rng.uniform();
        self.cumulative.partition_point(|&c| c <= u) + 1
    }

    pub fn sample(&mut self) -> CoalitionMask {
        let s = self.sample_size();
        let mut m = CoalitionMask::empty(self.n);
        for i in self.rng.sample_indices(self.n, s) {
            m.insert(i);
        }
        m
    }

    pub fn sample_many(&mut self, k: usize) -> Vec<CoalitionMask> {
        (0..k).map(|_| self.sample()).collect()
    }
}
