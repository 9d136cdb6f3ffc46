use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::link::Link;
use crate::network::{NetworkSpec, ShapNetwork};
use crate::optim::AdamState;
use crate::rng::{domain, Rng};
use crate::shapley::{CoalitionMask, ValueFunction};
use crate::tensor::Tensor;

use super::{batch_ranges, sample_masks, EpochReport, LossReport, TrainConfig, TrainData};

#[derive(Debug, Clone)]
pub struct FastShapOutcome {
    pub explainer: ShapNetwork,
    /// Only the Shapley loss is populated; prediction loss stays 0.
    pub history: Vec<EpochReport>,
    pub best_epoch: usize,
}

/// Per-batch game values of the frozen model: `v(N)`, `v(S)` for each mask
/// and `v(∅)`, all for output `j` of each instance.
struct Targets {
    full: Vec<f64>,
    masked: Vec<f64>,
    empty: Vec<f64>,
}

fn game_values(
    blackbox: &ShapNetwork,
    x: &[f64],
    masks: &[Vec<CoalitionMask>],
    picks: &[usize],
    vf: &ValueFunction,
) -> Result<Targets> {
    let n = blackbox.n_features();
    let d = blackbox.n_outputs();
    let b = picks.len();
    let k = masks[0].len();
    let r = vf.rows_per_mask();
    let mut rows = x.to_vec();
    for bi in 0..b {
        for m in &masks[bi] {
            vf.extend_masked(&x[bi * n..(bi + 1) * n], m, &mut rows)?;
        }
    }
    vf.extend_masked(&x[..n], &CoalitionMask::empty(n), &mut rows)?;
    let total = rows.len() / n;
    let mut logits = Vec::with_capacity(total * d);
    for chunk in rows.chunks(super::MAX_STACKED_ROWS * n) {
        let t = blackbox.logits_eval(&Tensor::matrix(chunk.len() / n, n, chunk.to_vec())?)?;
        logits.extend_from_slice(t.data());
    }
    let base = b + b * k * r;
    let empty_all: Vec<f64> = (0..d)
        .map(|j| (0..r).map(|q| logits[(base + q) * d + j]).sum::<f64>() / r as f64)
        .collect();
    let mut masked = vec![0.0; b * k];
    for bi in 0..b {
        let j = picks[bi];
        for kk in 0..k {
            let row0 = b + (bi * k + kk) * r;
            masked[bi * k + kk] = (0..r).map(|q| logits[(row0 + q) * d + j]).sum::<f64>() / r as f64;
        }
    }
    Ok(Targets {
        full: (0..b).map(|bi| logits[bi * d + picks[bi]]).collect(),
        masked,
        empty: picks.iter().map(|&j| empty_all[j]).collect(),
    })
}

/// Loss (and gradient with respect to the explainer's raw attributions) of
/// the amortized regression with additive efficient normalization.
fn explainer_loss(
    phi: &Tensor,
    n: usize,
    d: usize,
    masks: &[Vec<CoalitionMask>],
    picks: &[usize],
    t: &Targets,
    grad: Option<&mut Vec<f64>>,
) -> f64 {
    let b = picks.len();
    let k = masks[0].len();
    let scale = 1.0 / (b * k) as f64;
    let mut loss = 0.0;
    let mut g_out = grad;
    for bi in 0..b {
        let j = picks[bi];
        let row = phi.row(bi);
        let sum: f64 = (0..n).map(|i| row[i * d + j]).sum();
        let shift = (t.full[bi] - t.empty[bi] - sum) / n as f64;
        for (kk, m) in masks[bi].iter().enumerate() {
            let frac = m.cardinality() as f64 / n as f64;
            let pred: f64 = m.iter().map(|i| row[i * d + j]).sum::<f64>() + m.cardinality() as f64 * shift;
            let res = t.masked[bi * k + kk] - t.empty[bi] - pred;
            loss += scale * res * res;
            if let Some(g) = g_out.as_deref_mut() {
                let c = -2.0 * res * scale;
                for i in 0..n {
                    let inside = if m.contains(i) { 1.0 } else { 0.0 };
                    g[bi * n * d + i * d + j] += c * (inside - frac);
                }
            }
        }
    }
    loss
}

fn output_picks(seed: u64, epoch: u64, rows: &[usize], d: usize) -> Vec<usize> {
    rows.iter()
        .map(|&r| Rng::stream(seed, domain::OUTPUT_PICK, epoch, r as u64).below(d))
        .collect()
}

/// Trains a separate explainer network to regress the frozen model's
/// coalition values, sampling one output per instance.
pub fn train_fastshap(
    blackbox: &ShapNetwork,
    mut explainer_spec: NetworkSpec,
    data: TrainData<'_>,
    vf: &ValueFunction,
    cfg: &TrainConfig,
) -> Result<FastShapOutcome> {
    cfg.validate()?;
    let n = blackbox.n_features();
    let d = blackbox.n_outputs();
    if explainer_spec.n_features != n || explainer_spec.n_outputs != d {
        return Err(Error::shape(format!(
            "explainer is {}x{}, model is {n}x{d}",
            explainer_spec.n_features, explainer_spec.n_outputs
        )));
    }
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::Empty("training and validation splits must be non-empty".into()));
    }
    explainer_spec.link = Link::Identity;
    explainer_spec.relaxed = false;
    let mut net = ShapNetwork::new(explainer_spec, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam, &net.param_group_sizes());

    let valid_rows: Vec<usize> = (0..data.valid.rows()).collect();
    let valid_masks: Vec<Vec<CoalitionMask>> = valid_rows
        .iter()
        .map(|&r| sample_masks(cfg.seed, domain::VALID_MASKS, 0, r as u64, n, cfg.coalitions))
        .collect::<Result<_>>()?;
    let valid_picks = output_picks(cfg.seed, u64::MAX, &valid_rows, d);
    let valid_targets: Vec<(usize, usize, Targets)> = batch_ranges(valid_rows.len(), cfg.batch_size)
        .into_iter()
        .map(|(s, e)| {
            let t = game_values(blackbox, &data.valid.values()[s * n..e * n], &valid_masks[s..e], &valid_picks[s..e], vf)?;
            Ok((s, e, t))
        })
        .collect::<Result<_>>()?;

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut stale = 0;
    let rows = data.train.rows();
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..rows).collect();
        Rng::stream(cfg.seed, domain::SHUFFLE, epoch as u64, 0).shuffle(&mut order);
        let mut running = 0.0;
        for (b, (s, e)) in batch_ranges(rows, cfg.batch_size).into_iter().enumerate() {
            let idx = &order[s..e];
            let part = data.train.select(idx);
            let masks: Vec<Vec<CoalitionMask>> = idx
                .iter()
                .map(|&r| sample_masks(cfg.seed, domain::TRAIN_MASKS, epoch as u64, r as u64, n, cfg.coalitions))
                .collect::<Result<_>>()?;
            let picks = output_picks(cfg.seed, epoch as u64, idx, d);
            let targets = game_values(blackbox, part.values(), &masks, &picks, vf)?;
            let (phi, tape) = net.forward_batch(&part.to_tensor(), Mode::Train)?;
            let mut g = vec![0.0; phi.len()];
            let loss = explainer_loss(&phi, n, d, &masks, &picks, &targets, Some(&mut g));
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("explainer loss {loss}"),
                });
            }
            running += loss * (e - s) as f64 / rows as f64;
            let grads = net.backward(tape, Some(&Tensor::matrix(e - s, n * d, g)?), None)?;
            let groups: Vec<&[f64]> = net.gradient_groups(&grads);
            let owned: Vec<Vec<f64>> = groups.iter().map(|g| g.to_vec()).collect();
            let refs: Vec<&[f64]> = owned.iter().map(|g| g.as_slice()).collect();
            adam.step(&mut net.param_groups_mut(), &refs)?;
        }

        let mut valid = 0.0;
        for (s, e, t) in &valid_targets {
            let phi = net.forward_eval(&data.valid.select(&valid_rows[*s..*e]).to_tensor())?;
            let l = explainer_loss(&phi, n, d, &valid_masks[*s..*e], &valid_picks[*s..*e], t, None);
            valid += l * (e - s) as f64 / valid_rows.len() as f64;
        }
        let report = |loss: f64| LossReport {
            epoch,
            prediction: 0.0,
            shapley: loss,
            total: loss,
        };
        let r = EpochReport {
            epoch,
            train: report(running),
            valid: report(valid),
        };
        log::info!("explainer epoch {epoch}: train {running:.6}, valid {valid:.6}");
        history.push(r);
        if valid < best.0 {
            best = (valid, net.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, explainer, best_epoch) = best;
    Ok(FastShapOutcome {
        explainer,
        history,
        best_epoch,
    })
}

/// Explainer attributions after additive efficient normalization against
/// the frozen model's `v(N) - v(∅)`, `[rows, n * d]`.
pub fn fastshap_attributions(explainer: &ShapNetwork, blackbox: &ShapNetwork, x: &Tensor, vf: &ValueFunction) -> Result<Tensor> {
    let n = blackbox.n_features();
    let d = blackbox.n_outputs();
    if explainer.n_features() != n || explainer.n_outputs() != d {
        return Err(Error::shape("explainer and model disagree on shape"));
    }
    let mut phi = explainer.forward_eval(x)?;
    let full = blackbox.logits_eval(x)?;
    let v0 = super::empty_coalition_value(blackbox, vf)?;
    for row in 0..x.rows() {
        let target: Vec<f64> = (0..d).map(|j| full.row(row)[j] - v0[j]).collect();
        crate::shapley::efficiency_normalize(phi.row_mut(row), n, &target)?;
    }
    Ok(phi)
}
