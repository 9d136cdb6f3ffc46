use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::tensor::Tensor;

/// Function applied to summed attributions to produce a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Sigmoid,
    Softmax,
}

impl Link {
    /// Applies the link to one row of logits, writing into `out`.
    pub fn apply_row(self, logits: &[f64], out: &mut [f64]) {
        match self {
            Link::Identity => out.copy_from_slice(logits),
            Link::Sigmoid => {
                for (o, &z) in out.iter_mut().zip(logits) {
                    *o = math::sigmoid(z);
                }
            }
            Link::Softmax => {
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (o, &z) in out.iter_mut().zip(logits) {
                    *o = math::exp(z - max);
                    total += *o;
                }
                for o in out.iter_mut() {
                    *o /= total;
                }
            }
        }
    }
}

/// Row-wise link over a `[rows, d]` (or `[d]`) tensor of logits.
pub fn stable_link(logits: &Tensor, link: Link) -> Tensor {
    let rows = logits.rows();
    let d = logits.cols();
    let mut out: Vec<f64> = alloc::vec![0.0; logits.len()];
    for r in 0..rows {
        link.apply_row(logits.row(r), &mut out[r * d..(r + 1) * d]);
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn identity_passthrough() {
        let t = stable_link(&Tensor::vector(vec![2.0, -1.0]), Link::Identity);
        assert_eq!(t.data(), &[2.0, -1.0]);
    }

    #[test]
    fn sigmoid_zero() {
        let t = stable_link(&Tensor::vector(vec![0.0]), Link::Sigmoid);
        assert_eq!(t.data(), &[0.5]);
    }

    #[test]
    fn softmax_uniform() {
        let t = stable_link(&Tensor::vector(vec![3.5, 3.5, 3.5]), Link::Softmax);
        for &p in t.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(row in proptest::collection::vec(-1e4f64..1e4, 1..12)) {
            let t = stable_link(&Tensor::vector(row), Link::Softmax);
            let sum: f64 = t.data().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(t.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}
