//! Unbiased KernelSHAP: a Monte Carlo estimate of the right-hand side of the
//! constrained least-squares problem combined with its exactly known
//! left-hand side.
//!
//! With sizes drawn as `p(s) ∝ 1 / (s (n - s))` and a uniform subset, the
//! second-moment matrix `A = E[z z^T]` is `(1/2 - c) I + c 11^T` where
//! `c = E[s (s - 1)] / (n (n - 1))`. Solving
//! `min φ^T A φ - 2 b^T φ  s.t.  1^T φ = v(N) - v(∅)` then reduces to
//! `φ = (b - mean(b) 1) / (1/2 - c) + (v(N) - v(∅)) / n`, so the estimate is a
//! mean of centered per-sample vectors and its standard error follows
//! directly from their sample variance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

use super::{CoalitionGame, CoalitionMask, KernelSampler};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelShapOptions {
    /// Coalitions evaluated per round (pairs count twice).
    pub batch: usize,
    /// Stop once every standard error is at most `tolerance` times the range
    /// of the current estimates (per output).
    pub tolerance: f64,
    /// Hard cap on evaluated coalitions.
    pub max_samples: usize,
    /// Evaluate each coalition together with its complement.
    pub paired: bool,
}

impl Default for KernelShapOptions {
    fn default() -> Self {
        Self {
            batch: 512,
            tolerance: 0.01,
            max_samples: 1_000_000,
            paired: true,
        }
    }
}

/// Result of the sampling oracle. Matrices are `n x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyEstimate {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub samples: usize,
    pub converged: bool,
}

impl ShapleyEstimate {
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.d + j]).collect()
    }
}

/// Snapshot handed to the observer after every round.
#[derive(Debug)]
pub struct Checkpoint<'a> {
    pub samples: usize,
    pub values: &'a [f64],
    pub std_errors: &'a [f64],
    /// `v(N) - v(∅)` per output.
    pub total: &'a [f64],
}

/// `c = E[s (s - 1)] / (n (n - 1))` under the kernel size distribution.
pub fn pair_moment(n: usize) -> f64 {
    let raw: Vec<f64> = (1..n).map(|s| 1.0 / (s as f64 * (n - s) as f64)).collect();
    let z: f64 = raw.iter().sum();
    let e: f64 = (1..n).map(|s| raw[s - 1] / z * (s * (s - 1)) as f64).sum();
    e / (n * (n - 1)) as f64
}

struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / k;
            *s += delta * (v - *m);
        }
    }

    fn std_error(&self, i: usize) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let var = self.m2[i] / (self.count - 1) as f64;
        math::sqrt(var / self.count as f64)
    }
}

fn check_finite(values: &[f64], masks: &[CoalitionMask], d: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(k) => Err(Error::NonFinite(format!("game value at coalition {:?}", masks[k / d]))),
    }
}

/// Runs the oracle until convergence or `max_samples`, reporting progress to
/// `observer` after each round.
pub fn unbiased_kernelshap(
    game: &dyn CoalitionGame,
    options: &KernelShapOptions,
    rng: Rng,
    mut observer: impl FnMut(&Checkpoint<'_>),
) -> Result<ShapleyEstimate> {
    let n = game.players();
    let d = game.outputs();
    if n < 2 {
        return Err(Error::invalid(format!("the sampling oracle needs n >= 2, got {n}")));
    }
    if !(options.tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if options.batch == 0 || options.max_samples == 0 {
        return Err(Error::invalid("batch and max_samples must be positive"));
    }

    let ends = [CoalitionMask::empty(n), CoalitionMask::full(n)];
    let mut end_values = vec![0.0; 2 * d];
    game.evaluate(&ends, &mut end_values)?;
    check_finite(&end_values, &ends, d)?;
    let (v0, vn) = end_values.split_at(d);
    let total: Vec<f64> = vn.iter().zip(v0).map(|(a, b)| a - b).collect();

    let a = 0.5 - pair_moment(n);
    let mut sampler = KernelSampler::new(n, rng)?;
    let per_draw = if options.paired { 2 } else { 1 };
    let draws_per_round = (options.batch / per_draw).max(1);

    // per draw: u = b_sample - mean_i(b_sample), stored as [n x d]
    let mut stats = Welford::new(n * d);
    let mut values = vec![0.0; n * d];
    let mut std_errors = vec![f64::INFINITY; n * d];
    let mut samples = 0;
    let mut converged = false;
    let mut masks = Vec::new();
    let mut payoffs = Vec::new();
    let mut u = vec![0.0; n * d];

    while samples < options.max_samples {
        let draws = draws_per_round.min((options.max_samples - samples).div_ceil(per_draw));
        masks.clear();
        for _ in 0..draws {
            let m = sampler.sample();
            if options.paired {
                let c = m.complement();
                masks.push(m);
                masks.push(c);
            } else {
                masks.push(m);
            }
        }
        payoffs.clear();
        payoffs.resize(masks.len() * d, 0.0);
        game.evaluate(&masks, &mut payoffs)?;
        check_finite(&payoffs, &masks, d)?;
        samples += masks.len();

        for (group, vals) in masks.chunks(per_draw).zip(payoffs.chunks(per_draw * d)) {
            u.iter_mut().for_each(|v| *v = 0.0);
            for (m, v) in group.iter().zip(vals.chunks_exact(d)) {
                for i in m.iter() {
                    for j in 0..d {
                        u[i * d + j] += (v[j] - v0[j]) / per_draw as f64;
                    }
                }
            }
            for j in 0..d {
                let mean = (0..n).map(|i| u[i * d + j]).sum::<f64>() / n as f64;
                for i in 0..n {
                    u[i * d + j] -= mean;
                }
            }
            stats.push(&u);
        }

        for j in 0..d {
            for i in 0..n {
                let k = i * d + j;
                values[k] = stats.mean[k] / a + total[j] / n as f64;
                std_errors[k] = stats.std_error(k) / a;
            }
        }
        // re-impose the constraint exactly against rounding in the running mean
        for j in 0..d {
            let gap = total[j] - (0..n).map(|i| values[i * d + j]).sum::<f64>();
            for i in 0..n {
                values[i * d + j] += gap / n as f64;
            }
        }
        observer(&Checkpoint {
            samples,
            values: &values,
            std_errors: &std_errors,
            total: &total,
        });
        converged = (0..d).all(|j| {
            let col = (0..n).map(|i| values[i * d + j]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            let worst = (0..n).map(|i| std_errors[i * d + j]).fold(0.0, f64::max);
            worst <= options.tolerance * (hi - lo)
        });
        if converged {
            break;
        }
    }
    Ok(ShapleyEstimate {
        n,
        d,
        values,
        std_errors,
        samples,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::scalar_game;

    #[test]
    fn pair_moment_matches_enumeration() {
        // E[z_i z_j] by enumerating all subsets with the kernel size law
        for n in 2..9 {
            let p = crate::shapley::size_probabilities(n).unwrap();
            let mut e = 0.0;
            for bits in 1u64..(1 << n) - 1 {
                let s = bits.count_ones() as usize;
                if bits & 0b11 == 0b11 {
                    e += p[s - 1] / math::binomial(n, s);
                }
            }
            assert!((e - pair_moment(n)).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn additive_game_converges_to_its_weights() {
        let w = [1.0, -2.0, 0.5, 3.0];
        let g = scalar_game(4, move |m| m.iter().map(|i| w[i]).sum());
        let opts = KernelShapOptions {
            tolerance: 0.002,
            ..Default::default()
        };
        let est = unbiased_kernelshap(&g, &opts, Rng::new(1), |_| {}).unwrap();
        assert!(est.converged);
        for i in 0..4 {
            assert!((est.values[i] - w[i]).abs() < 5.0 * est.std_errors[i] + 1e-12, "{i}: {:?}", est.values);
        }
    }

    #[test]
    fn non_finite_values_are_reported() {
        let g = scalar_game(3, |m| if m.cardinality() == 1 { f64::INFINITY } else { 0.0 });
        assert!(matches!(
            unbiased_kernelshap(&g, &KernelShapOptions::default(), Rng::new(0), |_| {}),
            Err(Error::NonFinite(_))
        ));
    }
}
