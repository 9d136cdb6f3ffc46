//! Seeded synthetic binary task: eight standard-normal features, a linear
//! score plus three pairwise interactions, label = score > 0.

use alloc::format;
use alloc::vec::Vec;

use crate::data::FeatureMatrix;
use crate::error::Result;
use crate::rng::{domain, Rng};

pub const SYNTHETIC_FEATURES: usize = 8;

/// Linear weights; the last feature is pure noise.
pub const WEIGHTS: [f64; SYNTHETIC_FEATURES] = [1.5, -1.2, 1.0, -0.8, 0.6, -0.4, 0.3, 0.0];

pub const INTERACTIONS: [(usize, usize, f64); 3] = [(0, 1, 0.8), (2, 3, -0.6), (4, 5, 0.5)];

pub fn synthetic_score(x: &[f64]) -> f64 {
    let linear: f64 = x.iter().zip(WEIGHTS).map(|(v, w)| v * w).sum();
    linear + INTERACTIONS.iter().map(|&(a, b, g)| g * x[a] * x[b]).sum::<f64>()
}

pub fn synthetic_binary(rows: usize, seed: u64) -> Result<FeatureMatrix> {
    let mut values = Vec::with_capacity(rows * SYNTHETIC_FEATURES);
    let mut labels = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut rng = Rng::stream(seed, domain::SYNTHETIC, r as u64, 0);
        let x: Vec<f64> = (0..SYNTHETIC_FEATURES).map(|_| rng.normal()).collect();
        labels.push(if synthetic_score(&x) > 0.0 { 1.0 } else { 0.0 });
        values.extend(x);
    }
    FeatureMatrix::new(SYNTHETIC_FEATURES, values, labels)?
        .with_feature_names((0..SYNTHETIC_FEATURES).map(|i| format!("x{i}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_roughly_balanced() {
        let a = synthetic_binary(2000, 3).unwrap();
        assert_eq!(a, synthetic_binary(2000, 3).unwrap());
        let pos = a.labels().iter().filter(|&&l| l == 1.0).count();
        assert!((800..1200).contains(&pos), "{pos}");
        for r in 0..a.rows() {
            assert_eq!(a.label(r) == 1.0, synthetic_score(a.row(r)) > 0.0);
        }
    }
}
