use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded train/validation/test partition of `rows` row indices.
///
/// With `strata` (one class index per row) every class is spread evenly
/// along a common ordering before the cut, so each split keeps the class
/// proportions to within a row.
pub fn make_splits(rows: usize, fractions: [f64; 3], seed: u64, strata: Option<&[usize]>) -> Result<SplitSet> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let n_train = libm::round(fractions[0] * rows as f64) as usize;
    let n_valid = (libm::round(fractions[1] * rows as f64) as usize).min(rows - n_train.min(rows));
    if n_train == 0 || n_valid == 0 || n_train + n_valid >= rows {
        return Err(Error::invalid(format!(
            "fractions {fractions:?} leave an empty split for {rows} rows"
        )));
    }
    let mut rng = Rng::stream(seed, domain::SPLIT, 0, 0);
    let order: Vec<usize> = match strata {
        None => {
            let mut idx: Vec<usize> = (0..rows).collect();
            rng.shuffle(&mut idx);
            idx
        }
        Some(labels) => {
            if labels.len() != rows {
                return Err(Error::shape(format!("{} strata labels for {rows} rows", labels.len())));
            }
            let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut keyed: Vec<(f64, u64, usize)> = Vec::with_capacity(rows);
            for c in 0..classes {
                let mut members: Vec<usize> = (0..rows).filter(|&r| labels[r] == c).collect();
                rng.shuffle(&mut members);
                let count = members.len() as f64;
                for (k, r) in members.into_iter().enumerate() {
                    keyed.push(((k as f64 + 0.5) / count, rng.next_u64(), r));
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, _, r)| r).collect()
        }
    };
    let mut train = order[..n_train].to_vec();
    let mut valid = order[n_train..n_train + n_valid].to_vec();
    let mut test = order[n_train + n_valid..].to_vec();
    rng.shuffle(&mut train);
    rng.shuffle(&mut valid);
    rng.shuffle(&mut test);
    Ok(SplitSet { train, valid, test, seed })
}
