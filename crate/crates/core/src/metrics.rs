//! Predictive metrics, attribution agreement metrics and
//! inclusion/exclusion curves.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Task};
use crate::error::{Error, Result};
use crate::link::Link;
use crate::math;
use crate::network::ShapNetwork;
use crate::shapley::ShapleyEstimate;
use crate::tensor::Tensor;

/// Average (1-based) ranks with ties sharing their midrank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// ROC AUC via the Mann-Whitney statistic with midranks for ties.
pub fn auc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs both classes"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// One-vs-rest AUC per class weighted by class support. `scores` is
/// `[rows, classes]`; classes missing from `labels` are skipped.
pub fn auc_weighted_ovr(scores: &[f64], labels: &[usize], classes: usize) -> Result<f64> {
    if classes < 2 || scores.len() != labels.len() * classes {
        return Err(Error::shape(format!(
            "{} scores for {} rows of {classes} classes",
            scores.len(),
            labels.len()
        )));
    }
    let mut weighted = 0.0;
    let mut support = 0usize;
    for c in 0..classes {
        let count = labels.iter().filter(|&&l| l == c).count();
        if count == 0 {
            log::warn!("class {c} absent from labels; skipped in one-vs-rest AUC");
            continue;
        }
        if count == labels.len() {
            return Err(Error::invalid("one-vs-rest AUC needs at least two classes present"));
        }
        let col: Vec<f64> = (0..labels.len()).map(|r| scores[r * classes + c]).collect();
        let is_c: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        weighted += count as f64 * auc_binary(&col, &is_c)?;
        support += count;
    }
    if support == 0 {
        return Err(Error::invalid("no class present in labels"));
    }
    Ok(weighted / support as f64)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape(format!("metric inputs need equal lengths >= 2, got {} and {}", a.len(), b.len())));
    }
    Ok(())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = math::sqrt(a.iter().map(|x| x * x).sum());
    let nb = math::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, mb) = (math::mean(a), math::mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("correlation of a constant vector"));
    }
    Ok((sab / math::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Spearman correlation on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// `1 - SS_res / SS_tot` of `approx` against `truth`.
pub fn r_squared(truth: &[f64], approx: &[f64]) -> Result<f64> {
    check_pair(truth, approx)?;
    let m = math::mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("R^2 against a constant truth"));
    }
    let ss_res: f64 = truth.iter().zip(approx).map(|(t, a)| (t - a) * (t - a)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Instances left out because the metric was undefined for them or their
    /// oracle did not converge.
    pub dropped: usize,
}

impl MetricReport {
    pub fn new(name: &str, values: Vec<f64>, dropped: usize) -> Self {
        let (mean, std) = if values.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (math::mean(&values), math::std_dev(&values))
        };
        Self {
            name: name.to_string(),
            values,
            mean,
            std,
            dropped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub cosine: MetricReport,
    pub spearman: MetricReport,
    pub r_squared: MetricReport,
    pub unconverged: usize,
}

/// Per-instance agreement between approximate and reference attribution
/// vectors. Instances flagged as unconverged are dropped and counted.
pub fn fidelity(approx: &[Vec<f64>], truth: &[Vec<f64>], converged: &[bool]) -> Result<FidelityReport> {
    if approx.len() != truth.len() || truth.len() != converged.len() {
        return Err(Error::shape(format!(
            "{} approximations, {} references, {} flags",
            approx.len(),
            truth.len(),
            converged.len()
        )));
    }
    let mut cos = (Vec::new(), 0);
    let mut rho = (Vec::new(), 0);
    let mut r2 = (Vec::new(), 0);
    let mut unconverged = 0;
    for ((a, t), &ok) in approx.iter().zip(truth).zip(converged) {
        if a.len() != t.len() {
            return Err(Error::shape(format!("attribution lengths {} and {}", a.len(), t.len())));
        }
        if !ok {
            unconverged += 1;
            continue;
        }
        let push = |acc: &mut (Vec<f64>, usize), v: Result<f64>| match v {
            Ok(v) => acc.0.push(v),
            Err(_) => acc.1 += 1,
        };
        push(&mut cos, cosine_similarity(t, a));
        push(&mut rho, spearman(t, a));
        push(&mut r2, r_squared(t, a));
    }
    Ok(FidelityReport {
        cosine: MetricReport::new("cosine", cos.0, cos.1 + unconverged),
        spearman: MetricReport::new("spearman", rho.0, rho.1 + unconverged),
        r_squared: MetricReport::new("r_squared", r2.0, r2.1 + unconverged),
        unconverged,
    })
}

/// Class predicted from one row of logits (`0` for single-output models
/// means "negative").
pub fn predicted_class(logits: &[f64], link: Link) -> usize {
    if logits.len() == 1 {
        let mut p = [0.0];
        link.apply_row(logits, &mut p);
        return usize::from(p[0] >= 0.5);
    }
    logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Attribution column explained for an instance: the predicted class for
/// multi-output models, column 0 otherwise.
pub fn explained_output(logits: &[f64], link: Link) -> usize {
    if logits.len() == 1 {
        0
    } else {
        predicted_class(logits, link)
    }
}

/// Compares the network's raw attributions on `instances` to oracle
/// estimates. Each estimate holds either every output or only the explained
/// output.
pub fn explanation_fidelity(net: &ShapNetwork, instances: &FeatureMatrix, oracle: &[ShapleyEstimate]) -> Result<FidelityReport> {
    let phi = net.forward_eval(&instances.to_tensor())?;
    attribution_fidelity(net, instances, &phi, oracle)
}

/// As [`explanation_fidelity`], for attributions `phi` (`rows x n*d`)
/// computed elsewhere, such as efficiency-normalized ones. The explained
/// output is still chosen from the network's prediction.
pub fn attribution_fidelity(
    net: &ShapNetwork,
    instances: &FeatureMatrix,
    phi: &Tensor,
    oracle: &[ShapleyEstimate],
) -> Result<FidelityReport> {
    if instances.rows() != oracle.len() {
        return Err(Error::shape(format!("{} instances, {} oracle estimates", instances.rows(), oracle.len())));
    }
    let (n, d) = (net.n_features(), net.n_outputs());
    if phi.rows() != instances.rows() || phi.cols() != n * d {
        return Err(Error::shape(format!("attributions are {}x{}, expected {}x{}", phi.rows(), phi.cols(), instances.rows(), n * d)));
    }
    let logits = net.logits_eval(&instances.to_tensor())?;
    let mut approx = Vec::with_capacity(oracle.len());
    let mut truth = Vec::with_capacity(oracle.len());
    for (r, est) in oracle.iter().enumerate() {
        if est.n != n || (est.d != d && est.d != 1) {
            return Err(Error::shape(format!("oracle estimate is {}x{}, model is {n}x{d}", est.n, est.d)));
        }
        let j = explained_output(logits.row(r), net.link());
        approx.push((0..n).map(|i| phi.row(r)[i * d + j]).collect());
        truth.push(est.column(if est.d == 1 { 0 } else { j }));
    }
    let converged: Vec<bool> = oracle.iter().map(|e| e.converged).collect();
    fidelity(&approx, &truth, &converged)
}

/// Accuracy for classification, `R^2` for regression.
pub fn score(net: &ShapNetwork, x: &Tensor, labels: &[f64], task: Task) -> Result<f64> {
    let logits = net.logits_eval(x)?;
    match task {
        Task::Regression => r_squared(labels, logits.data()),
        _ => {
            let hits = (0..labels.len())
                .filter(|&r| predicted_class(logits.row(r), net.link()) == labels[r] as usize)
                .count();
            Ok(hits as f64 / labels.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub fractions: Vec<f64>,
    /// Score with only the top-ranked features kept.
    pub inclusion: Vec<f64>,
    /// Score with the top-ranked features masked.
    pub exclusion: Vec<f64>,
}

/// Inclusion/exclusion curves. Features are ranked per instance by `|φ|`
/// of the explained output, using `attributions` (`n x d` per row) when
/// given and the network's own otherwise; masked features take `baseline`.
pub fn inclusion_exclusion_curve(
    net: &ShapNetwork,
    data: &FeatureMatrix,
    task: Task,
    fractions: &[f64],
    baseline: &[f64],
    attributions: Option<&[Vec<f64>]>,
) -> Result<Curves> {
    let (n, d) = (net.n_features(), net.n_outputs());
    if baseline.len() != n {
        return Err(Error::shape(format!("baseline has {} values for {n} features", baseline.len())));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid("fractions must lie in [0, 1]"));
    }
    let x = data.to_tensor();
    let phi = net.forward_eval(&x)?;
    let logits = net.logits_from_phi(&phi);
    if let Some(a) = attributions {
        if a.len() != data.rows() || a.iter().any(|v| v.len() != n * d) {
            return Err(Error::shape("provided attributions do not match the data"));
        }
    }
    let order: Vec<Vec<usize>> = (0..data.rows())
        .map(|r| {
            let j = explained_output(logits.row(r), net.link());
            let src = attributions.map_or(phi.row(r), |a| a[r].as_slice());
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| src[b * d + j].abs().total_cmp(&src[a * d + j].abs()).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut curves = Curves {
        fractions: fractions.to_vec(),
        inclusion: Vec::new(),
        exclusion: Vec::new(),
    };
    for &f in fractions {
        let k = libm::round(f * n as f64) as usize;
        let mut inc = Vec::with_capacity(data.rows() * n);
        let mut exc = Vec::with_capacity(data.rows() * n);
        for r in 0..data.rows() {
            let row = data.row(r);
            let mut keep = vec![false; n];
            for &i in &order[r][..k] {
                keep[i] = true;
            }
            inc.extend((0..n).map(|i| if keep[i] { row[i] } else { baseline[i] }));
            exc.extend((0..n).map(|i| if keep[i] { baseline[i] } else { row[i] }));
        }
        let rows = data.rows();
        curves.inclusion.push(score(net, &Tensor::matrix(rows, n, inc)?, data.labels(), task)?);
        curves.exclusion.push(score(net, &Tensor::matrix(rows, n, exc)?, data.labels(), task)?);
    }
    Ok(curves)
}
