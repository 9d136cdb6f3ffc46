//! The self-explaining network: a backbone whose last layer has `n * d`
//! units, read as an `n x d` attribution matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    BatchNormLayer, Context, KanRbfLayer, KanSplineLayer, Layer, LinearLayer, Mode, RbfConfig, SplineConfig,
};
use crate::link::Link;
use crate::rng::{domain, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    KanSpline,
    KanRbf,
    Mlp,
    /// MLP whose widths are rescaled to match the spline KAN's parameter count.
    MlpMatched,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 4] = [Self::KanSpline, Self::KanRbf, Self::Mlp, Self::MlpMatched];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::KanSpline => "kan_spline",
            Self::KanRbf => "kan_rbf",
            Self::Mlp => "mlp",
            Self::MlpMatched => "mlp_matched",
        }
    }
}

pub const DEFAULT_HIDDEN: [usize; 3] = [64, 128, 64];

fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub backbone: BackboneKind,
    pub n_features: usize,
    pub n_outputs: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub link: Link,
    #[serde(default)]
    pub relaxed: bool,
    #[serde(default)]
    pub spline: SplineConfig,
    #[serde(default)]
    pub rbf: RbfConfig,
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub output_labels: Vec<String>,
}

impl NetworkSpec {
    pub fn new(backbone: BackboneKind, n_features: usize, n_outputs: usize, link: Link) -> Self {
        Self {
            backbone,
            n_features,
            n_outputs,
            hidden: default_hidden(),
            link,
            relaxed: false,
            spline: SplineConfig::default(),
            rbf: RbfConfig::default(),
            feature_names: Vec::new(),
            output_labels: Vec::new(),
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden = hidden.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_outputs == 0 {
            return Err(Error::invalid("network needs at least one feature and one output"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if !self.feature_names.is_empty() && self.feature_names.len() != self.n_features {
            return Err(Error::invalid(format!(
                "{} feature names for {} features",
                self.feature_names.len(),
                self.n_features
            )));
        }
        if !self.output_labels.is_empty() && self.output_labels.len() != self.n_outputs {
            return Err(Error::invalid(format!(
                "{} output labels for {} outputs",
                self.output_labels.len(),
                self.n_outputs
            )));
        }
        self.spline.validate()?;
        self.rbf.validate()
    }

    /// Width of the final layer.
    pub fn out_width(&self) -> usize {
        self.n_features * self.n_outputs
    }

    /// Hidden widths actually instantiated (differs from `hidden` only for
    /// `mlp_matched`).
    pub fn resolved_hidden(&self) -> Vec<usize> {
        match self.backbone {
            BackboneKind::MlpMatched => matched_widths(self),
            _ => self.hidden.clone(),
        }
    }

    /// Number of trainable values, `delta` included.
    pub fn param_count(&self) -> usize {
        let hidden = self.resolved_hidden();
        let dims = self.dims(&hidden);
        let body = match self.backbone {
            BackboneKind::KanSpline => kan_spline_count(&dims, &self.spline),
            BackboneKind::KanRbf => dims.windows(2).map(|w| w[0] * w[1] * self.rbf.centers).sum(),
            BackboneKind::Mlp | BackboneKind::MlpMatched => mlp_count(&dims),
        };
        body + usize::from(self.relaxed)
    }

    fn dims(&self, hidden: &[usize]) -> Vec<usize> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(self.n_features);
        dims.extend_from_slice(hidden);
        dims.push(self.out_width());
        dims
    }

    pub fn feature_name(&self, i: usize) -> String {
        self.feature_names.get(i).cloned().unwrap_or_else(|| format!("x{i}"))
    }

    pub fn output_label(&self, j: usize) -> String {
        self.output_labels.get(j).cloned().unwrap_or_else(|| format!("y{j}"))
    }
}

fn kan_spline_count(dims: &[usize], cfg: &SplineConfig) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] * (cfg.num_basis() + 1)).sum()
}

fn mlp_count(dims: &[usize]) -> usize {
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(k, w)| w[0] * w[1] + w[1] + if k < last { 2 * w[1] } else { 0 })
        .sum()
}

fn scaled(hidden: &[usize], alpha: f64) -> Vec<usize> {
    hidden
        .iter()
        .map(|&h| libm::round(h as f64 * alpha).max(1.0) as usize)
        .collect()
}

/// Scales every hidden width by a common factor so the MLP's parameter count
/// lands as close as possible to the spline KAN with the same widths.
fn matched_widths(spec: &NetworkSpec) -> Vec<usize> {
    let target = kan_spline_count(&spec.dims(&spec.hidden), &spec.spline);
    let count = |alpha: f64| mlp_count(&spec.dims(&scaled(&spec.hidden, alpha)));
    let (mut lo, mut hi) = (1e-3, 1e3);
    for _ in 0..200 {
        let mid = libm::sqrt(lo * hi);
        if count(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gap = |alpha: f64| count(alpha).abs_diff(target);
    let best = if gap(lo) <= gap(hi) { lo } else { hi };
    scaled(&spec.hidden, best)
}

/// Attributions for one instance: `values[i * d + j]` is feature `i`'s
/// contribution to output `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
    pub feature_names: Vec<String>,
    pub output_labels: Vec<String>,
}

impl AttributionMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::shape(format!("{n}x{d} attribution matrix needs {} values, got {}", n * d, values.len())));
        }
        Ok(Self {
            n,
            d,
            values,
            feature_names: Vec::new(),
            output_labels: Vec::new(),
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.d];
        for i in 0..self.n {
            for (s, v) in sums.iter_mut().zip(&self.values[i * self.d..(i + 1) * self.d]) {
                *s += v;
            }
        }
        sums
    }
}

/// Output of a single-instance forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub phi: AttributionMatrix,
    pub logits: Vec<f64>,
    pub prediction: Vec<f64>,
}

/// Forward contexts recorded for one batch, consumed by `backward`.
#[derive(Debug)]
pub struct Tape {
    network: u64,
    rows: usize,
    entries: Vec<(usize, Context)>,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Parameter gradients in the same layout as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<f64>>,
    pub delta: f64,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.delta += other.delta;
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .chain(core::iter::once(&self.delta))
            .fold(0.0, |m, v| v.abs().max(m))
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
pub struct ShapNetwork {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    delta: f64,
    id: u64,
}

impl Clone for ShapNetwork {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            delta: self.delta,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        }
    }
}

impl ShapNetwork {
    /// Builds and initializes a network; initialization is a pure function of
    /// `(spec, seed)`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let hidden = spec.resolved_hidden();
        let dims = spec.dims(&hidden);
        let mut layers = Vec::new();
        for (k, w) in dims.windows(2).enumerate() {
            let mut rng = Rng::stream(seed, domain::INIT, k as u64, 0);
            let last = k + 2 == dims.len();
            match spec.backbone {
                BackboneKind::KanSpline => {
                    layers.push(Layer::KanSpline(KanSplineLayer::new(w[0], w[1], spec.spline, &mut rng)?));
                }
                BackboneKind::KanRbf => {
                    layers.push(Layer::KanRbf(KanRbfLayer::new(w[0], w[1], spec.rbf, &mut rng)?));
                }
                BackboneKind::Mlp | BackboneKind::MlpMatched => {
                    layers.push(Layer::Linear(LinearLayer::new(w[0], w[1], &mut rng)));
                    if !last {
                        layers.push(Layer::BatchNorm(BatchNormLayer::new(w[1])));
                        layers.push(Layer::Relu { dim: w[1] });
                    }
                }
            }
        }
        Ok(Self {
            spec,
            layers,
            delta: 0.0,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn n_features(&self) -> usize {
        self.spec.n_features
    }

    pub fn n_outputs(&self) -> usize {
        self.spec.n_outputs
    }

    pub fn link(&self) -> Link {
        self.spec.link
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// The learned bias; always 0 unless the network is relaxed.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn set_delta(&mut self, delta: f64) -> Result<()> {
        if !self.spec.relaxed && delta != 0.0 {
            return Err(Error::invalid("delta can only be set on a relaxed network"));
        }
        self.delta = delta;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params().len()).sum::<usize>() + usize::from(self.spec.relaxed)
    }

    /// Mutable views of every trainable group, `delta` last when relaxed.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let relaxed = self.spec.relaxed;
        let mut groups: Vec<&mut [f64]> = self.layers.iter_mut().map(|l| l.params_mut()).collect();
        if relaxed {
            groups.push(core::slice::from_mut(&mut self.delta));
        }
        groups
    }

    pub fn param_group_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(|l| l.params().len()).collect();
        if self.spec.relaxed {
            sizes.push(1);
        }
        sizes
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| vec![0.0; l.params().len()]).collect(),
            delta: 0.0,
        }
    }

    /// Flattens gradients into the group order of `param_groups_mut`.
    pub fn gradient_groups<'a>(&self, grads: &'a Gradients) -> Vec<&'a [f64]> {
        let mut groups: Vec<&[f64]> = grads.layers.iter().map(|g| g.as_slice()).collect();
        if self.spec.relaxed {
            groups.push(core::slice::from_ref(&grads.delta));
        }
        groups
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.spec.n_features {
            return Err(Error::shape(format!(
                "network expects {} features, got {}",
                self.spec.n_features,
                x.cols()
            )));
        }
        x.ensure_finite("network input")
    }

    /// Batched forward pass returning the raw `[rows, n * d]` attributions and
    /// the tape needed by `backward`.
    pub fn forward_batch(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut entries = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let (out, ctx) = layer.forward(&h, mode, true)?;
            entries.push((k, ctx.expect("context requested")));
            h = out;
        }
        Ok((
            h,
            Tape {
                network: self.id,
                rows: x.rows(),
                entries,
            },
        ))
    }

    /// Inference pass (batch norm on running statistics), `[rows, n * d]`.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward_eval(&h);
        }
        Ok(h)
    }

    /// `logit_j = sum_i phi_ij + delta` for every row of a raw attribution batch.
    pub fn logits_from_phi(&self, phi: &Tensor) -> Tensor {
        let (n, d) = (self.spec.n_features, self.spec.n_outputs);
        let rows = phi.rows();
        let mut out = vec![self.delta; rows * d];
        for r in 0..rows {
            let src = phi.row(r);
            let dst = &mut out[r * d..(r + 1) * d];
            for i in 0..n {
                for (o, v) in dst.iter_mut().zip(&src[i * d..(i + 1) * d]) {
                    *o += v;
                }
            }
        }
        Tensor::matrix(rows, d, out).expect("consistent dims")
    }

    /// Logits for a batch in eval mode, `[rows, d]`.
    pub fn logits_eval(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.logits_from_phi(&self.forward_eval(x)?))
    }

    /// Explains and predicts a single instance.
    pub fn forward(&self, x: &[f64]) -> Result<Explanation> {
        let input = Tensor::matrix(1, x.len(), x.to_vec())?;
        let phi = self.forward_eval(&input)?;
        let logits = self.logits_from_phi(&phi).into_data();
        let mut prediction = vec![0.0; logits.len()];
        self.spec.link.apply_row(&logits, &mut prediction);
        let mut phi = AttributionMatrix::new(self.spec.n_features, self.spec.n_outputs, phi.into_data())?;
        phi.feature_names = (0..phi.n).map(|i| self.spec.feature_name(i)).collect();
        phi.output_labels = (0..phi.d).map(|j| self.spec.output_label(j)).collect();
        Ok(Explanation { phi, logits, prediction })
    }

    /// Reverse pass. `grad_phi` is the loss gradient with respect to the raw
    /// attributions; `grad_logits`, when given, is folded in through
    /// `logit_j = sum_i phi_ij + delta`.
    pub fn backward(&self, tape: Tape, grad_phi: Option<&Tensor>, grad_logits: Option<&Tensor>) -> Result<Gradients> {
        if tape.network != self.id || tape.entries.len() != self.layers.len() {
            return Err(Error::MissingForward("tape was recorded on a different network".into()));
        }
        let (n, d) = (self.spec.n_features, self.spec.n_outputs);
        let rows = tape.rows;
        let mut g = match grad_phi {
            Some(t) => {
                if t.rows() != rows || t.cols() != n * d {
                    return Err(Error::shape(format!(
                        "attribution gradient is {}x{}, expected {rows}x{}",
                        t.rows(),
                        t.cols(),
                        n * d
                    )));
                }
                t.clone().reshape(vec![rows, n * d])?
            }
            None => Tensor::zeros(&[rows, n * d]),
        };
        let mut grads = self.zero_gradients();
        if let Some(gl) = grad_logits {
            if gl.rows() != rows || gl.cols() != d {
                return Err(Error::shape(format!("logit gradient is {}x{}, expected {rows}x{d}", gl.rows(), gl.cols())));
            }
            for r in 0..rows {
                let src = gl.row(r);
                let dst = g.row_mut(r);
                for i in 0..n {
                    for (o, v) in dst[i * d..(i + 1) * d].iter_mut().zip(src) {
                        *o += v;
                    }
                }
            }
            if self.spec.relaxed {
                grads.delta = gl.data().iter().sum();
            }
        }
        for (k, ctx) in tape.entries.iter().rev() {
            let need_input = *k > 0;
            let next = self.layers[*k].backward(ctx, &g, &mut grads.layers[*k], need_input)?;
            if let Some(next) = next {
                g = next;
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: BackboneKind, n: usize, d: usize) -> NetworkSpec {
        NetworkSpec::new(kind, n, d, Link::Sigmoid).with_hidden(&[6, 5])
    }

    #[test]
    fn attribution_shape() {
        let net = ShapNetwork::new(spec(BackboneKind::KanSpline, 4, 3), 1).unwrap();
        let out = net.forward(&[0.1, 0.2, -0.3, 0.5]).unwrap();
        assert_eq!((out.phi.n, out.phi.d), (4, 3));
        assert_eq!(out.logits.len(), 3);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let net = ShapNetwork::new(spec(BackboneKind::Mlp, 4, 1), 1).unwrap();
        assert!(matches!(net.forward(&[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn param_count_formula_matches_allocation() {
        for kind in BackboneKind::ALL {
            for relaxed in [false, true] {
                let mut s = spec(kind, 5, 2);
                s.relaxed = relaxed;
                let net = ShapNetwork::new(s.clone(), 3).unwrap();
                assert_eq!(net.param_count(), s.param_count(), "{kind:?}");
            }
        }
    }

    #[test]
    fn matched_mlp_is_within_two_percent() {
        for (n, d) in [(8, 1), (14, 2), (30, 5), (4, 3)] {
            let kan = NetworkSpec::new(BackboneKind::KanSpline, n, d, Link::Sigmoid);
            let mut m = kan.clone();
            m.backbone = BackboneKind::MlpMatched;
            let (a, b) = (kan.param_count() as f64, m.param_count() as f64);
            assert!((a - b).abs() / a <= 0.02, "n={n} d={d}: kan {a} mlp {b}");
        }
    }

    #[test]
    fn zero_sum_gives_half_probability() {
        let mut net = ShapNetwork::new(spec(BackboneKind::KanSpline, 3, 1), 0).unwrap();
        for l in net.layers_mut() {
            l.params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        let out = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out.prediction, vec![0.5]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = ShapNetwork::new(spec(BackboneKind::Mlp, 3, 2), 9).unwrap();
        let x = Tensor::matrix(4, 3, (0..12).map(|v| v as f64 / 7.0 - 0.5).collect()).unwrap();
        let (_, tape) = net.forward_batch(&x, Mode::Train).unwrap();
        let g = net.backward(tape, None, None).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn delta_gradient_is_sum_of_logit_gradients() {
        let mut s = spec(BackboneKind::KanRbf, 3, 2);
        s.relaxed = true;
        let mut net = ShapNetwork::new(s, 2).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 0.0, 1.0]).unwrap();
        let (_, tape) = net.forward_batch(&x, Mode::Train).unwrap();
        let gl = Tensor::matrix(2, 2, vec![0.5, -2.0, 1.25, 3.0]).unwrap();
        let g = net.backward(tape, None, Some(&gl)).unwrap();
        assert_eq!(g.delta, 2.75);
    }

    #[test]
    fn foreign_tape_is_rejected() {
        let mut a = ShapNetwork::new(spec(BackboneKind::Mlp, 3, 1), 1).unwrap();
        let b = a.clone();
        let x = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let (_, tape) = a.forward_batch(&x, Mode::Train).unwrap();
        assert!(matches!(b.backward(tape, None, None), Err(Error::MissingForward(_))));
    }

    #[test]
    fn zero_mlp_gives_zero_output() {
        let mut net = ShapNetwork::new(spec(BackboneKind::Mlp, 3, 1), 4).unwrap();
        for l in net.layers_mut() {
            if let Layer::Linear(_) = l {
                l.params_mut().iter_mut().for_each(|p| *p = 0.0);
            }
        }
        let x = Tensor::matrix(3, 3, vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0, 2.0, 2.0, 2.0]).unwrap();
        let (phi, _) = net.forward_batch(&x, Mode::Train).unwrap();
        assert!(phi.data().iter().all(|&v| v == 0.0));
        assert!(net.forward_eval(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_rows_are_batch_order_invariant() {
        let net = ShapNetwork::new(spec(BackboneKind::KanSpline, 2, 2), 5).unwrap();
        let a = Tensor::matrix(2, 2, vec![0.3, -0.2, 1.5, 0.7]).unwrap();
        let b = Tensor::matrix(2, 2, vec![1.5, 0.7, 0.3, -0.2]).unwrap();
        let (pa, pb) = (net.forward_eval(&a).unwrap(), net.forward_eval(&b).unwrap());
        assert_eq!(pa.row(0), pb.row(1));
        assert_eq!(pa.row(1), pb.row(0));
    }
}
