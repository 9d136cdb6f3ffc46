//! Prediction loss and the coalition-regression (Shapley) loss, with their
//! gradients with respect to the network's logits and attributions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::link::Link;
use crate::math;
use crate::network::{Gradients, ShapNetwork};
use crate::shapley::{CoalitionMask, ValueFunction};
use crate::tensor::Tensor;

const LOG_FLOOR: f64 = 1e-12;

/// Which outputs enter the Shapley loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyOutputs {
    #[default]
    All,
    TrueClass,
}

/// Loss kind implied by the link: cross-entropy for sigmoid and softmax,
/// squared error (against one-hot targets for classification) otherwise.
fn check_link(link: Link, task: Task, d: usize) -> Result<()> {
    match (link, task) {
        (Link::Sigmoid, _) if d != 1 => Err(Error::invalid("sigmoid link needs a single output")),
        (Link::Softmax, _) if d < 2 => Err(Error::invalid("softmax link needs at least two outputs")),
        (Link::Sigmoid | Link::Softmax, Task::Regression) => Err(Error::invalid("regression needs the identity link")),
        _ => Ok(()),
    }
}

fn target_of(task: Task, d: usize, label: f64, j: usize) -> Result<f64> {
    match task {
        Task::Regression => Ok(label),
        _ => {
            let classes = if d == 1 { 2 } else { d };
            let c = label as usize;
            if label < 0.0 || label != c as f64 || c >= classes {
                return Err(Error::invalid(format!("class label {label} out of range for {classes} classes")));
            }
            Ok(if d == 1 { c as f64 } else { f64::from(u8::from(c == j)) })
        }
    }
}

/// Mean prediction loss over rows of post-link `prediction` (`[rows, d]`):
/// binary cross-entropy, categorical cross-entropy or mean squared error,
/// with logs floored at `1e-12`.
pub fn prediction_loss(prediction: &Tensor, labels: &[f64], link: Link, task: Task) -> Result<f64> {
    let rows = prediction.rows();
    let d = prediction.cols();
    if labels.len() != rows {
        return Err(Error::shape(format!("{} labels for {rows} predictions", labels.len())));
    }
    check_link(link, task, d)?;
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let p = prediction.row(r);
        total += match link {
            Link::Sigmoid => {
                let y = target_of(task, d, label, 0)?;
                -(y * math::ln(p[0].max(LOG_FLOOR)) + (1.0 - y) * math::ln((1.0 - p[0]).max(LOG_FLOOR)))
            }
            Link::Softmax => {
                target_of(task, d, label, 0)?;
                -math::ln(p[label as usize].max(LOG_FLOOR))
            }
            Link::Identity => {
                let mut s = 0.0;
                for (j, &pj) in p.iter().enumerate() {
                    let e = pj - target_of(task, d, label, j)?;
                    s += e * e;
                }
                s / d as f64
            }
        };
    }
    Ok(total / rows as f64)
}

/// Loss and its gradient with respect to the logits, scaled by `scale`
/// (the per-row weight of the batch mean).
fn prediction_terms(logits: &[f64], label: f64, link: Link, task: Task, scale: f64, grad: &mut [f64]) -> Result<f64> {
    let d = logits.len();
    let mut p = vec![0.0; d];
    link.apply_row(logits, &mut p);
    match link {
        Link::Sigmoid => {
            let y = target_of(task, d, label, 0)?;
            grad[0] += scale * (p[0] - y);
            Ok(-(y * math::ln(p[0].max(LOG_FLOOR)) + (1.0 - y) * math::ln((1.0 - p[0]).max(LOG_FLOOR))))
        }
        Link::Softmax => {
            target_of(task, d, label, 0)?;
            let c = label as usize;
            for (j, g) in grad.iter_mut().enumerate() {
                *g += scale * (p[j] - f64::from(u8::from(j == c)));
            }
            Ok(-math::ln(p[c].max(LOG_FLOOR)))
        }
        Link::Identity => {
            let mut s = 0.0;
            for (j, g) in grad.iter_mut().enumerate() {
                let e = p[j] - target_of(task, d, label, j)?;
                s += e * e;
                *g += scale * 2.0 * e / d as f64;
            }
            Ok(s / d as f64)
        }
    }
}

/// Settings shared by the loss evaluations of both trainers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub beta: f64,
    pub efficiency_normalization: bool,
    pub outputs: ShapleyOutputs,
}

/// Unweighted loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub prediction: f64,
    pub shapley: f64,
}

impl LossParts {
    pub fn total(&self, beta: f64) -> f64 {
        self.prediction + beta * self.shapley
    }
}

/// One batch: `rows` instances with their labels and `K` coalitions each.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a [f64],
    pub labels: &'a [f64],
    pub masks: &'a [Vec<CoalitionMask>],
}

impl Batch<'_> {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }
}

/// Stacked rows beyond which the batch is processed in instance chunks.
pub const MAX_STACKED_ROWS: usize = 16_384;

/// Evaluates `prediction + beta * shapley` on a batch and, when `mode` is
/// `Train`, its gradient. The network is run once on the stacked rows
/// `[x; masked copies; value-function baseline rows]` per chunk.
pub fn viashap_batch(
    net: &mut ShapNetwork,
    batch: &Batch<'_>,
    vf: &ValueFunction,
    task: Task,
    settings: &LossSettings,
    mode: Mode,
) -> Result<(LossParts, Option<Gradients>)> {
    let n = net.n_features();
    let d = net.n_outputs();
    let b_total = batch.rows();
    if b_total == 0 {
        return Err(Error::Empty("empty batch".into()));
    }
    if batch.x.len() != b_total * n || batch.masks.len() != b_total {
        return Err(Error::shape("batch values, labels and masks disagree"));
    }
    check_link(net.link(), task, d)?;
    let k_masks = batch.masks[0].len();
    if k_masks == 0 || batch.masks.iter().any(|m| m.len() != k_masks) {
        return Err(Error::invalid("every instance needs the same positive number of coalitions"));
    }
    let r = vf.rows_per_mask();
    let per_instance = 1 + k_masks * r;
    let chunk = ((MAX_STACKED_ROWS.saturating_sub(r)) / per_instance).max(1);
    let n_out = match settings.outputs {
        ShapleyOutputs::All => d,
        ShapleyOutputs::TrueClass => 1,
    };
    let pred_scale = 1.0 / b_total as f64;
    let sh_scale = 1.0 / (b_total * k_masks * n_out) as f64;

    let mut parts = LossParts::default();
    let mut grads = (mode == Mode::Train).then(|| net.zero_gradients());
    let baseline_rows = {
        let mut rows = Vec::with_capacity(r * n);
        vf.extend_masked(&batch.x[..n], &CoalitionMask::empty(n), &mut rows)?;
        rows
    };

    for start in (0..b_total).step_by(chunk) {
        let end = (start + chunk).min(b_total);
        let b = end - start;
        let masked_at = b;
        let base_at = b + b * k_masks * r;
        let total_rows = base_at + r;
        let mut stacked = Vec::with_capacity(total_rows * n);
        stacked.extend_from_slice(&batch.x[start * n..end * n]);
        for bi in start..end {
            let x = &batch.x[bi * n..(bi + 1) * n];
            for m in &batch.masks[bi] {
                vf.extend_masked(x, m, &mut stacked)?;
            }
        }
        stacked.extend_from_slice(&baseline_rows);
        let input = Tensor::matrix(total_rows, n, stacked)?;

        let (phi, tape) = match mode {
            Mode::Train => {
                let (phi, tape) = net.forward_batch(&input, Mode::Train)?;
                (phi, Some(tape))
            }
            Mode::Eval => (net.forward_eval(&input)?, None),
        };
        let logits = net.logits_from_phi(&phi);
        let lg = logits.data();
        let ph = phi.data();

        let mut g_logits = vec![0.0; total_rows * d];
        let mut g_phi = vec![0.0; total_rows * n * d];
        let beta = settings.beta;

        // value of the empty coalition
        let mut v0 = vec![0.0; d];
        for q in 0..r {
            for j in 0..d {
                v0[j] += lg[(base_at + q) * d + j] / r as f64;
            }
        }

        for bl in 0..b {
            let bi = start + bl;
            let label = batch.labels[bi];
            let lb = &lg[bl * d..(bl + 1) * d];
            parts.prediction += pred_scale * prediction_terms(lb, label, net.link(), task, pred_scale, &mut g_logits[bl * d..(bl + 1) * d])?;

            let phi_b = &ph[bl * n * d..(bl + 1) * n * d];
            let sums: Vec<f64> = (0..d).map(|j| (0..n).map(|i| phi_b[i * d + j]).sum()).collect();
            let outputs: Vec<usize> = match settings.outputs {
                ShapleyOutputs::All => (0..d).collect(),
                ShapleyOutputs::TrueClass => vec![if d == 1 { 0 } else { label as usize }],
            };
            for (k, mask) in batch.masks[bi].iter().enumerate() {
                let frac = mask.cardinality() as f64 / n as f64;
                let row0 = masked_at + (bl * k_masks + k) * r;
                for &j in &outputs {
                    let mut vs = 0.0;
                    for q in 0..r {
                        vs += lg[(row0 + q) * d + j] / r as f64;
                    }
                    let mut coalition_sum: f64 = mask.iter().map(|i| phi_b[i * d + j]).sum();
                    if settings.efficiency_normalization {
                        coalition_sum += frac * (lb[j] - v0[j] - sums[j]);
                    }
                    let res = vs - v0[j] - coalition_sum;
                    parts.shapley += sh_scale * res * res;
                    let g = beta * 2.0 * res * sh_scale;
                    if g == 0.0 || mode == Mode::Eval {
                        continue;
                    }
                    for q in 0..r {
                        g_logits[(row0 + q) * d + j] += g / r as f64;
                    }
                    let dv0 = if settings.efficiency_normalization { frac - 1.0 } else { -1.0 };
                    for q in 0..r {
                        g_logits[(base_at + q) * d + j] += g * dv0 / r as f64;
                    }
                    for i in mask.iter() {
                        g_phi[bl * n * d + i * d + j] -= g;
                    }
                    if settings.efficiency_normalization {
                        g_logits[bl * d + j] -= g * frac;
                        for i in 0..n {
                            g_phi[bl * n * d + i * d + j] += g * frac;
                        }
                    }
                }
            }
        }
        if !(parts.prediction.is_finite() && parts.shapley.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss (prediction {}, shapley {})",
                parts.prediction, parts.shapley
            )));
        }
        if let (Some(tape), Some(acc)) = (tape, grads.as_mut()) {
            let gp = Tensor::matrix(total_rows, n * d, g_phi)?;
            let gl = Tensor::matrix(total_rows, d, g_logits)?;
            let g = net.backward(tape, Some(&gp), Some(&gl))?;
            acc.add_assign(&g);
        }
    }
    Ok((parts, grads))
}

/// `v(∅)` of the model's own game, per output.
pub fn empty_coalition_value(net: &ShapNetwork, vf: &ValueFunction) -> Result<Vec<f64>> {
    let n = net.n_features();
    let mut rows = Vec::new();
    vf.extend_masked(&vec![0.0; n], &CoalitionMask::empty(n), &mut rows)?;
    let r = rows.len() / n;
    let logits = net.logits_eval(&Tensor::matrix(r, n, rows)?)?;
    Ok((0..net.n_outputs())
        .map(|j| (0..r).map(|q| logits.row(q)[j]).sum::<f64>() / r as f64)
        .collect())
}

/// Attributions as the Shapley loss sees them, for every row of `x`: the
/// network's `φ`, additively normalized to `v(N) - v(∅)` when `efficiency`
/// is set.
pub fn model_attributions(net: &ShapNetwork, x: &Tensor, vf: &ValueFunction, efficiency: bool) -> Result<Tensor> {
    let mut phi = net.forward_eval(x)?;
    if !efficiency {
        return Ok(phi);
    }
    let n = net.n_features();
    let v0 = empty_coalition_value(net, vf)?;
    let logits = net.logits_from_phi(&phi);
    for r in 0..x.rows() {
        let target: Vec<f64> = logits.row(r).iter().zip(&v0).map(|(l, v)| l - v).collect();
        crate::shapley::efficiency_normalize(phi.row_mut(r), n, &target)?;
    }
    Ok(phi)
}

/// `φ(x)` after additive efficient normalization against `v(N) - v(∅)` of
/// the model's own game (one `n x d` matrix).
pub fn normalized_attributions(net: &ShapNetwork, x: &[f64], vf: &ValueFunction) -> Result<Vec<f64>> {
    let n = net.n_features();
    let d = net.n_outputs();
    let mut rows = x.to_vec();
    vf.extend_masked(x, &CoalitionMask::empty(n), &mut rows)?;
    let total = rows.len() / n;
    let phi = net.forward_eval(&Tensor::matrix(total, n, rows)?)?;
    let logits = net.logits_from_phi(&phi);
    let mut out = phi.row(0).to_vec();
    let target: Vec<f64> = (0..d)
        .map(|j| {
            let v0 = (1..total).map(|q| logits.row(q)[j]).sum::<f64>() / (total - 1) as f64;
            logits.row(0)[j] - v0
        })
        .collect();
    crate::shapley::efficiency_normalize(&mut out, n, &target)?;
    Ok(out)
}
