use selfshap_core::data::Task;
use selfshap_core::gradcheck::{gradient_check, Objective};
use selfshap_core::layers::Mode;
use selfshap_core::network::Gradients;
use selfshap_core::rng::Rng;
use selfshap_core::shapley::{CoalitionMask, KernelSampler, ValueFunction};
use selfshap_core::train::{viashap_batch, Batch, LossSettings, ShapleyOutputs};
use selfshap_core::{BackboneKind, Link, NetworkSpec, Result, ShapNetwork};

#[derive(Clone, Copy, Debug)]
enum Term {
    Prediction,
    Shapley,
}

struct BatchObjective {
    x: Vec<f64>,
    labels: Vec<f64>,
    masks: Vec<Vec<CoalitionMask>>,
    vf: ValueFunction,
    task: Task,
    efficiency: bool,
    outputs: ShapleyOutputs,
    term: Term,
}

impl BatchObjective {
    fn run(&self, net: &mut ShapNetwork, beta: f64, mode: Mode) -> Result<(f64, Option<Gradients>)> {
        let batch = Batch {
            x: &self.x,
            labels: &self.labels,
            masks: &self.masks,
        };
        let settings = LossSettings {
            beta,
            efficiency_normalization: self.efficiency,
            outputs: self.outputs,
        };
        let (parts, grads) = viashap_batch(net, &batch, &self.vf, self.task, &settings, mode)?;
        let value = match self.term {
            Term::Prediction => parts.prediction,
            Term::Shapley => parts.shapley,
        };
        Ok((value, grads))
    }
}

impl Objective for BatchObjective {
    fn loss(&self, net: &mut ShapNetwork) -> Result<f64> {
        // train mode: batch-norm uses batch statistics, as in the gradient
        Ok(self.run(net, 1.0, Mode::Train)?.0)
    }

    fn loss_and_grad(&self, net: &mut ShapNetwork) -> Result<(f64, Gradients)> {
        let (value, plain) = self.run(net, 0.0, Mode::Train)?;
        let plain = plain.expect("train mode");
        match self.term {
            Term::Prediction => Ok((value, plain)),
            Term::Shapley => {
                let mut with = self.run(net, 1.0, Mode::Train)?.1.expect("train mode");
                for (a, b) in with.layers.iter_mut().zip(&plain.layers) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x -= y;
                    }
                }
                with.delta -= plain.delta;
                Ok((value, with))
            }
        }
    }
}

fn setup(backbone: BackboneKind, seed: u64, term: Term) -> (ShapNetwork, BatchObjective) {
    let mut rng = Rng::new(1000 + seed);
    let n = 3 + (seed % 3) as usize;
    let (task, d, link) = match seed % 3 {
        0 => (Task::Binary, 1, Link::Sigmoid),
        1 => (Task::Multiclass { classes: 3 }, 3, Link::Softmax),
        _ => (Task::Regression, 1, Link::Identity),
    };
    let mut spec = NetworkSpec::new(backbone, n, d, link).with_hidden(&[5, 4]);
    spec.relaxed = seed % 2 == 1;
    let mut net = ShapNetwork::new(spec, seed).unwrap();
    if net.spec().relaxed {
        net.set_delta(rng.normal() * 0.3).unwrap();
    }
    let rows = 5;
    let x: Vec<f64> = (0..rows * n).map(|_| rng.normal()).collect();
    let labels: Vec<f64> = (0..rows)
        .map(|_| match task {
            Task::Regression => rng.normal(),
            _ => rng.below(task.classes()) as f64,
        })
        .collect();
    let mut sampler = KernelSampler::new(n, Rng::new(seed)).unwrap();
    let masks = (0..rows).map(|_| sampler.sample_many(3)).collect();
    let vf = if seed % 4 == 3 {
        ValueFunction::marginal((0..3 * n).map(|_| rng.normal()).collect(), n).unwrap()
    } else {
        ValueFunction::zeros(n)
    };
    let objective = BatchObjective {
        x,
        labels,
        masks,
        vf,
        task,
        efficiency: seed % 5 != 4,
        outputs: if seed % 7 == 6 { ShapleyOutputs::TrueClass } else { ShapleyOutputs::All },
        term,
    };
    (net, objective)
}

/// Central differences at step 1e-5 carry about 1e-10 of rounding noise
/// on losses of order one, which the relative rule's 1e-8 floor cannot absorb
/// for near-zero gradients (e.g. a bias feeding batch normalization). Probes
/// over 1e-4 must therefore sit inside that absolute noise band.
const FD_NOISE: f64 = 1e-9;

fn check_backbone(backbone: BackboneKind, term: Term) {
    let mut checked = 0;
    let mut over = Vec::new();
    for seed in 0..100 {
        let (mut net, objective) = setup(backbone, seed, term);
        let report = gradient_check(&mut net, &objective, 1e-5, 1).unwrap();
        checked += report.checked;
        over.extend(report.probes.into_iter().filter(|p| p.rel_error > 1e-4).map(|p| (seed, p)));
    }
    let worst_abs = over.iter().map(|(_, p)| (p.analytic - p.numeric).abs()).fold(0.0, f64::max);
    eprintln!("{backbone:?} {term:?}: {} of {checked} probes over 1e-4, largest absolute gap {worst_abs:e}", over.len());
    for (seed, p) in &over {
        assert!(
            (p.analytic - p.numeric).abs() <= FD_NOISE,
            "seed {seed} {}: analytic {} numeric {}",
            p.name,
            p.analytic,
            p.numeric
        );
    }
}

#[test]
fn kan_spline_prediction_term() {
    check_backbone(BackboneKind::KanSpline, Term::Prediction);
}

#[test]
fn kan_spline_shapley_term() {
    check_backbone(BackboneKind::KanSpline, Term::Shapley);
}

#[test]
fn kan_rbf_prediction_term() {
    check_backbone(BackboneKind::KanRbf, Term::Prediction);
}

#[test]
fn kan_rbf_shapley_term() {
    check_backbone(BackboneKind::KanRbf, Term::Shapley);
}

#[test]
fn mlp_prediction_term() {
    check_backbone(BackboneKind::Mlp, Term::Prediction);
}

#[test]
fn mlp_shapley_term() {
    check_backbone(BackboneKind::Mlp, Term::Shapley);
}
