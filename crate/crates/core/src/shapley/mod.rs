//! Coalitions, kernel-weighted sampling, value functions and Shapley value
//! oracles (exact enumeration and unbiased KernelSHAP).

mod exact;
mod game;
mod kernel;
mod mask;
mod unbiased;
mod value;

use alloc::format;

pub use exact::{exact_shapley, EXACT_LIMIT};
pub use game::{scalar_game, CachedGame, CoalitionGame, FnGame, ModelGame, OutputSelection};
pub use kernel::{shapley_kernel_weight, size_probabilities, KernelSampler};
pub use mask::CoalitionMask;
pub use unbiased::{pair_moment, unbiased_kernelshap, Checkpoint, KernelShapOptions, ShapleyEstimate};
pub use value::{apply_mask, ValueFunction, ValueFunctionKind};

use crate::error::{Error, Result};

/// Shifts each column of an `n x d` row-major matrix by
/// `(target_j - sum_i phi_ij) / n` so the column sums hit `target` exactly.
pub fn efficiency_normalize(phi: &mut [f64], n: usize, target: &[f64]) -> Result<()> {
    let d = target.len();
    if phi.len() != n * d || n == 0 {
        return Err(Error::shape(format!("{} attributions for n = {n}, d = {d}", phi.len())));
    }
    for (j, &t) in target.iter().enumerate() {
        let sum: f64 = (0..n).map(|i| phi[i * d + j]).sum();
        let shift = (t - sum) / n as f64;
        for i in 0..n {
            phi[i * d + j] += shift;
        }
    }
    Ok(())
}
