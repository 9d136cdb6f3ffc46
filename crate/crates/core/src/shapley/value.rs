use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::CoalitionMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueFunctionKind {
    /// Absent features take a fixed baseline value.
    #[default]
    Baseline,
    /// Absent features are averaged over background rows.
    Marginal,
}

/// How absent features are filled in when a coalition is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueFunction {
    Baseline { baseline: Vec<f64> },
    Marginal { background: Vec<f64>, n: usize },
}

impl ValueFunction {
    /// Baseline removal with the all-zeros instance.
    pub fn zeros(n: usize) -> Self {
        Self::Baseline { baseline: vec![0.0; n] }
    }

    pub fn marginal(background: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || background.is_empty() {
            return Err(Error::Empty("marginal value function needs at least one background row".into()));
        }
        if background.len() % n != 0 {
            return Err(Error::shape(format!("background of {} values is not a multiple of {n}", background.len())));
        }
        Ok(Self::Marginal { background, n })
    }

    pub fn kind(&self) -> ValueFunctionKind {
        match self {
            Self::Baseline { .. } => ValueFunctionKind::Baseline,
            Self::Marginal { .. } => ValueFunctionKind::Marginal,
        }
    }

    pub fn players(&self) -> usize {
        match self {
            Self::Baseline { baseline } => baseline.len(),
            Self::Marginal { n, .. } => *n,
        }
    }

    /// Model inputs produced per coalition (the model outputs over these rows
    /// are averaged).
    pub fn rows_per_mask(&self) -> usize {
        match self {
            Self::Baseline { .. } => 1,
            Self::Marginal { background, n } => background.len() / n,
        }
    }

    /// Appends the `rows_per_mask()` masked copies of `x` to `out`.
    pub fn extend_masked(&self, x: &[f64], mask: &CoalitionMask, out: &mut Vec<f64>) -> Result<()> {
        let n = self.players();
        if x.len() != n || mask.players() != n {
            return Err(Error::shape(format!(
                "masking {} values with a {}-player coalition under a {n}-feature value function",
                x.len(),
                mask.players()
            )));
        }
        let fill = |filler: &[f64], out: &mut Vec<f64>| {
            out.extend((0..n).map(|i| if mask.contains(i) { x[i] } else { filler[i] }));
        };
        match self {
            Self::Baseline { baseline } => fill(baseline, out),
            Self::Marginal { background, .. } => {
                for row in background.chunks_exact(n) {
                    fill(row, out);
                }
            }
        }
        Ok(())
    }
}

/// Masked copies of `x`: one row under baseline removal, one per background
/// row under marginal expectations.
pub fn apply_mask(x: &[f64], mask: &CoalitionMask, vf: &ValueFunction) -> Result<Tensor> {
    let mut out = Vec::with_capacity(vf.rows_per_mask() * x.len());
    vf.extend_masked(x, mask, &mut out)?;
    Tensor::matrix(vf.rows_per_mask(), x.len(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_masking() {
        let vf = ValueFunction::zeros(3);
        let x = [1.0, 2.0, 3.0];
        let m = CoalitionMask::from_indices(3, [0, 2]).unwrap();
        assert_eq!(apply_mask(&x, &m, &vf).unwrap().data(), &[1.0, 0.0, 3.0]);
        assert_eq!(apply_mask(&x, &CoalitionMask::full(3), &vf).unwrap().data(), &x);
        assert_eq!(apply_mask(&x, &CoalitionMask::empty(3), &vf).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn marginal_masking_fills_from_each_background_row() {
        let vf = ValueFunction::marginal(vec![10.0, 20.0, 30.0, 40.0], 2).unwrap();
        let m = CoalitionMask::from_indices(2, [1]).unwrap();
        let t = apply_mask(&[1.0, 2.0], &m, &vf).unwrap();
        assert_eq!(t.data(), &[10.0, 2.0, 30.0, 2.0]);
        assert!(ValueFunction::marginal(Vec::new(), 2).is_err());
    }
}
