use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

use super::{CoalitionGame, CoalitionMask};

/// Largest player count enumerated exactly.
pub const EXACT_LIMIT: usize = 20;

const CHUNK: usize = 4096;

/// Exact Shapley values by enumerating all `2^n` coalitions. Returns an
/// `n x d` row-major matrix.
pub fn exact_shapley(game: &dyn CoalitionGame) -> Result<Vec<f64>> {
    let n = game.players();
    let d = game.outputs();
    if n > EXACT_LIMIT {
        return Err(Error::TooManyPlayers {
            players: n,
            limit: EXACT_LIMIT,
        });
    }
    if n == 0 {
        return Err(Error::Empty("game has no players".into()));
    }
    let total = 1usize << n;
    let mut values = vec![0.0; total * d];
    let mut masks = Vec::with_capacity(CHUNK.min(total));
    for start in (0..total).step_by(CHUNK) {
        let end = (start + CHUNK).min(total);
        masks.clear();
        masks.extend((start..end).map(|b| CoalitionMask::from_bits(n, b as u64)));
        game.evaluate(&masks, &mut values[start * d..end * d])?;
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(alloc::format!(
            "game value at coalition {:?}",
            CoalitionMask::from_bits(n, (k / d) as u64)
        )));
    }
    // weight of a coalition of size s not containing i: s! (n-s-1)! / n!
    let weights: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * math::binomial(n - 1, s))).collect();
    let mut phi = vec![0.0; n * d];
    for bits in 0..total {
        let s = (bits as u64).count_ones() as usize;
        for i in 0..n {
            if bits >> i & 1 == 1 {
                continue;
            }
            let with = bits | 1 << i;
            let w = weights[s];
            for j in 0..d {
                phi[i * d + j] += w * (values[with * d + j] - values[bits * d + j]);
            }
        }
    }
    Ok(phi)
}
