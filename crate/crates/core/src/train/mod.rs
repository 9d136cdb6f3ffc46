//! Training loops: the self-explaining trainer and an amortized post-hoc
//! explainer trained against a frozen model.

mod fastshap;
mod loss;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Task};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::network::{NetworkSpec, ShapNetwork};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{domain, Rng};
use crate::shapley::{CoalitionMask, KernelSampler, ValueFunction, ValueFunctionKind};
use crate::tensor::Tensor;

pub use fastshap::{fastshap_attributions, train_fastshap, FastShapOutcome};
pub use loss::{
    empty_coalition_value, model_attributions, normalized_attributions, prediction_loss, viashap_batch, Batch, LossParts, LossSettings, ShapleyOutputs,
    MAX_STACKED_ROWS,
};

fn default_beta() -> f64 {
    10.0
}
fn default_coalitions() -> usize {
    32
}
fn default_background() -> usize {
    128
}
fn default_true() -> bool {
    true
}
fn default_batch() -> usize {
    256
}
fn default_epochs() -> usize {
    300
}
fn default_patience() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the Shapley loss.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Coalitions sampled per instance and epoch.
    #[serde(default = "default_coalitions")]
    pub coalitions: usize,
    #[serde(default)]
    pub value_fn: ValueFunctionKind,
    /// Background rows (from the validation split) for marginal expectations.
    #[serde(default = "default_background")]
    pub background_size: usize,
    #[serde(default = "default_true")]
    pub efficiency_normalization: bool,
    #[serde(default)]
    pub shapley_loss_outputs: ShapleyOutputs,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oversample_minority: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            coalitions: default_coalitions(),
            value_fn: ValueFunctionKind::Baseline,
            background_size: default_background(),
            efficiency_normalization: true,
            shapley_loss_outputs: ShapleyOutputs::All,
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            seed: 0,
            oversample_minority: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta must be finite and non-negative, got {}", self.beta)));
        }
        if self.coalitions == 0 {
            return Err(Error::invalid("at least one coalition per instance is required"));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("patience, batch size and max epochs must be positive"));
        }
        if self.value_fn == ValueFunctionKind::Marginal && self.background_size == 0 {
            return Err(Error::invalid("marginal value function needs background rows"));
        }
        Ok(())
    }

    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            beta: self.beta,
            efficiency_normalization: self.efficiency_normalization,
            outputs: self.shapley_loss_outputs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub prediction: f64,
    /// Unweighted Shapley loss.
    pub shapley: f64,
    pub total: f64,
}

impl LossReport {
    fn new(epoch: usize, parts: LossParts, beta: f64) -> Self {
        Self {
            epoch,
            prediction: parts.prediction,
            shapley: parts.shapley,
            total: parts.total(beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train: LossReport,
    pub valid: LossReport,
}

/// Training and validation data with their task.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a FeatureMatrix,
    pub valid: &'a FeatureMatrix,
    pub task: Task,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation total loss.
    pub network: ShapNetwork,
    pub history: Vec<EpochReport>,
    pub best_epoch: usize,
    pub value_function: ValueFunction,
}

/// Samples `k` kernel-weighted coalitions for `(domain, epoch, row)`.
pub fn sample_masks(seed: u64, stream: u64, epoch: u64, row: u64, n: usize, k: usize) -> Result<Vec<CoalitionMask>> {
    let mut sampler = KernelSampler::new(n, Rng::stream(seed, stream, epoch, row))?;
    Ok(sampler.sample_many(k))
}

/// Value function used by training and by the oracle for a trained model.
pub fn build_value_function(cfg: &TrainConfig, n: usize, valid: &FeatureMatrix) -> Result<ValueFunction> {
    match cfg.value_fn {
        ValueFunctionKind::Baseline => Ok(ValueFunction::zeros(n)),
        ValueFunctionKind::Marginal => {
            if valid.is_empty() {
                return Err(Error::Empty("validation split is empty; no background rows".into()));
            }
            let take = cfg.background_size.min(valid.rows());
            let mut rng = Rng::stream(cfg.seed, domain::BACKGROUND, 0, 0);
            let picks: Vec<usize> = rng.sample_indices(valid.rows(), take).into_iter().collect();
            ValueFunction::marginal(valid.select(&picks).values().to_vec(), n)
        }
    }
}

/// Batch boundaries over `rows`; a trailing single row joins the previous
/// batch so batch normalization always sees two rows.
pub fn batch_ranges(rows: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..rows)
        .step_by(batch_size.max(1))
        .map(|s| (s, (s + batch_size).min(rows)))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").1 = e;
    }
    out
}

/// Duplicates minority-class training rows (sampling with replacement)
/// until both classes are equally frequent.
pub fn oversample_minority(train: &FeatureMatrix, task: Task, seed: u64) -> Result<FeatureMatrix> {
    if task != Task::Binary {
        return Err(Error::invalid("oversampling applies to binary classification only"));
    }
    let counts = train.class_counts(2);
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid(format!("oversampling needs both classes present, counts {counts:?}")));
    }
    let minority = if counts[0] < counts[1] { 0 } else { 1 };
    let deficit = counts[1 - minority] - counts[minority];
    let members: Vec<usize> = (0..train.rows()).filter(|&r| train.class(r) == minority).collect();
    let mut rng = Rng::stream(seed, domain::OVERSAMPLE, 0, 0);
    let mut idx: Vec<usize> = (0..train.rows()).collect();
    idx.extend((0..deficit).map(|_| members[rng.below(members.len())]));
    Ok(train.select(&idx))
}

/// Largest `|logit_j - (sum_i phi_ij + delta)|` over `x`, with the sums
/// recomputed independently of the network's own reduction.
pub fn local_accuracy_gap(net: &ShapNetwork, x: &Tensor) -> Result<f64> {
    let phi = net.forward_eval(x)?;
    let logits = net.logits_from_phi(&phi);
    let (n, d) = (net.n_features(), net.n_outputs());
    let mut worst: f64 = 0.0;
    for r in 0..x.rows() {
        let row = phi.row(r);
        for j in 0..d {
            let s: f64 = (0..n).rev().map(|i| row[i * d + j]).sum::<f64>() + net.delta();
            worst = worst.max((logits.row(r)[j] - s).abs());
        }
    }
    Ok(worst)
}

const LOCAL_ACCURACY_TOL: f64 = 1e-9;

/// Validation loss with fixed coalitions.
fn validation_loss(
    net: &mut ShapNetwork,
    valid: &FeatureMatrix,
    masks: &[Vec<CoalitionMask>],
    vf: &ValueFunction,
    task: Task,
    cfg: &TrainConfig,
) -> Result<LossParts> {
    let settings = cfg.loss_settings();
    let n = valid.n_features();
    let mut acc = LossParts::default();
    for (s, e) in batch_ranges(valid.rows(), cfg.batch_size) {
        let batch = Batch {
            x: &valid.values()[s * n..e * n],
            labels: &valid.labels()[s..e],
            masks: &masks[s..e],
        };
        let (p, _) = viashap_batch(net, &batch, vf, task, &settings, Mode::Eval)?;
        let w = (e - s) as f64 / valid.rows() as f64;
        acc.prediction += w * p.prediction;
        acc.shapley += w * p.shapley;
    }
    Ok(acc)
}

/// Trains a self-explaining network with early stopping on the validation
/// total loss and returns the best checkpoint.
pub fn train(data: TrainData<'_>, spec: NetworkSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(data, spec, cfg, |_| {})
}

pub fn train_with_observer(
    data: TrainData<'_>,
    spec: NetworkSpec,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::Empty("training and validation splits must be non-empty".into()));
    }
    let n = spec.n_features;
    if data.train.n_features() != n || data.valid.n_features() != n {
        return Err(Error::shape(format!("network expects {n} features, data has {}", data.train.n_features())));
    }
    if spec.n_outputs != data.task.n_outputs() {
        return Err(Error::shape(format!(
            "network has {} outputs, task needs {}",
            spec.n_outputs,
            data.task.n_outputs()
        )));
    }
    let oversampled;
    let train_split = if cfg.oversample_minority {
        oversampled = oversample_minority(data.train, data.task, cfg.seed)?;
        &oversampled
    } else {
        data.train
    };
    let vf = build_value_function(cfg, n, data.valid)?;
    let mut net = ShapNetwork::new(spec, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam, &net.param_group_sizes());
    let settings = cfg.loss_settings();
    let valid_masks: Vec<Vec<CoalitionMask>> = (0..data.valid.rows())
        .map(|r| sample_masks(cfg.seed, domain::VALID_MASKS, 0, r as u64, n, cfg.coalitions))
        .collect::<Result<_>>()?;

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut stale = 0;
    let rows = train_split.rows();
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..rows).collect();
        Rng::stream(cfg.seed, domain::SHUFFLE, epoch as u64, 0).shuffle(&mut order);
        let mut running = LossParts::default();
        for (b, (s, e)) in batch_ranges(rows, cfg.batch_size).into_iter().enumerate() {
            let idx = &order[s..e];
            let part = train_split.select(idx);
            let masks: Vec<Vec<CoalitionMask>> = idx
                .iter()
                .map(|&r| sample_masks(cfg.seed, domain::TRAIN_MASKS, epoch as u64, r as u64, n, cfg.coalitions))
                .collect::<Result<_>>()?;
            let batch = Batch {
                x: part.values(),
                labels: part.labels(),
                masks: &masks,
            };
            let (parts, grads) = viashap_batch(&mut net, &batch, &vf, data.task, &settings, Mode::Train).map_err(|err| match err {
                Error::NonFinite(detail) => Error::Diverged { epoch, batch: b, detail },
                other => other,
            })?;
            let grads = grads.expect("train mode yields gradients");
            if !grads.layers.iter().flatten().all(|g| g.is_finite()) || !grads.delta.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: "non-finite gradient".into(),
                });
            }
            let w = (e - s) as f64 / rows as f64;
            running.prediction += w * parts.prediction;
            running.shapley += w * parts.shapley;
            let grad_groups: Vec<Vec<f64>> = net.gradient_groups(&grads).into_iter().map(|g| g.to_vec()).collect();
            let grad_refs: Vec<&[f64]> = grad_groups.iter().map(|g| g.as_slice()).collect();
            adam.step(&mut net.param_groups_mut(), &grad_refs)?;
        }

        let check_rows: Vec<usize> = {
            let take = cfg.batch_size.min(data.valid.rows());
            let mut rng = Rng::stream(cfg.seed, domain::CHECK, epoch as u64, 0);
            rng.sample_indices(data.valid.rows(), take).into_iter().collect()
        };
        let gap = local_accuracy_gap(&net, &data.valid.select(&check_rows).to_tensor())?;
        if gap > LOCAL_ACCURACY_TOL {
            return Err(Error::LocalAccuracy { gap });
        }

        let valid = validation_loss(&mut net, data.valid, &valid_masks, &vf, data.task, cfg)?;
        let report = EpochReport {
            epoch,
            train: LossReport::new(epoch, running, cfg.beta),
            valid: LossReport::new(epoch, valid, cfg.beta),
        };
        if !report.valid.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                detail: "non-finite validation loss".into(),
            });
        }
        log::info!(
            "epoch {epoch}: train {:.6} (pred {:.6}, shap {:.6}), valid {:.6}",
            report.train.total,
            report.train.prediction,
            report.train.shapley,
            report.valid.total
        );
        observer(&report);
        history.push(report);
        if report.valid.total < best.0 {
            best = (report.valid.total, net.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, network, best_epoch) = best;
    Ok(TrainOutcome {
        network,
        history,
        best_epoch,
        value_function: vf,
    })
}
