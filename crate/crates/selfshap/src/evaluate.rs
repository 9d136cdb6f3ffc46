//! Evaluation shared by the commands.

use serde::{Deserialize, Serialize};

use selfshap_core::data::{FeatureMatrix, Task};
use selfshap_core::link::stable_link;
use selfshap_core::metrics::{attribution_fidelity, auc_binary, auc_weighted_ovr, score, FidelityReport};
use selfshap_core::train::model_attributions;
use selfshap_core::shapley::{ShapleyEstimate, ValueFunction};
use selfshap_core::{Link, ShapNetwork};

use crate::error::Result;
use crate::oracle::{explain_rows, OracleSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictive {
    pub rows: usize,
    /// Accuracy for classifiers, `R^2` for regression.
    pub score: f64,
    /// Binary AUC, or support-weighted one-vs-rest AUC for several classes.
    pub auc: Option<f64>,
}

pub fn predictive(net: &ShapNetwork, data: &FeatureMatrix, task: Task) -> Result<Predictive> {
    let x = data.to_tensor();
    let logits = net.logits_eval(&x)?;
    let auc = match task {
        Task::Regression => None,
        Task::Binary => {
            let labels: Vec<bool> = (0..data.rows()).map(|r| data.class(r) == 1).collect();
            Some(auc_binary(logits.data(), &labels)?)
        }
        Task::Multiclass { classes } => {
            let scores = match net.link() {
                Link::Softmax => stable_link(&logits, Link::Softmax),
                _ => logits,
            };
            let labels: Vec<usize> = (0..data.rows()).map(|r| data.class(r)).collect();
            Some(auc_weighted_ovr(scores.data(), &labels, classes)?)
        }
    };
    Ok(Predictive {
        rows: data.rows(),
        score: score(net, &x, data.labels(), task)?,
        auc,
    })
}

/// Oracle estimates for `data` and the agreement of the network's
/// explanations (normalized when `efficiency` is set) with them.
pub fn fidelity_against_oracle(
    net: &ShapNetwork,
    vf: &ValueFunction,
    efficiency: bool,
    data: &FeatureMatrix,
    settings: &OracleSettings,
    threads: usize,
) -> Result<(FidelityReport, Vec<ShapleyEstimate>)> {
    let estimates = explain_rows(net, vf, data, settings, threads)?;
    let phi = model_attributions(net, &data.to_tensor(), vf, efficiency)?;
    Ok((attribution_fidelity(net, data, &phi, &estimates)?, estimates))
}
