use selfshap_core::data::{FeatureMatrix, Task};
use selfshap_core::metrics::{auc_binary, cosine_similarity};
use selfshap_core::rng::Rng;
use selfshap_core::shapley::{exact_shapley, ModelGame, OutputSelection, ValueFunction};
use selfshap_core::train::{fastshap_attributions, local_accuracy_gap, train, train_fastshap, TrainConfig, TrainData};
use selfshap_core::{BackboneKind, Error, Link, NetworkSpec, ShapNetwork};

fn linear_task(rows: usize, seed: u64) -> FeatureMatrix {
    let w = [1.0, -0.8, 0.6, -0.4, 0.3, 0.2, -0.1, 0.0];
    let mut rng = Rng::new(seed);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..rows {
        let x: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        labels.push(f64::from(u8::from(x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() > 0.0)));
        values.extend(x);
    }
    FeatureMatrix::new(8, values, labels).unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        coalitions: 8,
        batch_size: 64,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_task_reaches_high_auc() {
    let train_set = linear_task(1500, 1);
    let valid = linear_task(500, 2);
    let data = TrainData {
        train: &train_set,
        valid: &valid,
        task: Task::Binary,
    };
    let spec = NetworkSpec::new(BackboneKind::KanSpline, 8, 1, Link::Sigmoid).with_hidden(&[16, 16]);
    let cfg = TrainConfig {
        max_epochs: 50,
        ..small_config(50)
    };
    let out = train(data, spec, &cfg).unwrap();
    let logits = out.network.logits_eval(&valid.to_tensor()).unwrap();
    let labels: Vec<bool> = valid.labels().iter().map(|&l| l == 1.0).collect();
    let auc = auc_binary(logits.data(), &labels).unwrap();
    assert!(auc >= 0.95, "validation AUC {auc}");
    assert!(local_accuracy_gap(&out.network, &valid.to_tensor()).unwrap() <= 1e-6);
}

#[test]
fn fixed_seed_repeats_bit_for_bit() {
    let train_set = linear_task(200, 3);
    let valid = linear_task(80, 4);
    let data = TrainData {
        train: &train_set,
        valid: &valid,
        task: Task::Binary,
    };
    let spec = NetworkSpec::new(BackboneKind::Mlp, 8, 1, Link::Sigmoid).with_hidden(&[12, 8]);
    let a = train(data, spec.clone(), &small_config(4)).unwrap();
    let b = train(data, spec.clone(), &small_config(4)).unwrap();
    assert_eq!(a.history, b.history);
    let x = valid.to_tensor();
    assert_eq!(a.network.forward_eval(&x).unwrap(), b.network.forward_eval(&x).unwrap());
    let c = train(data, spec, &TrainConfig { seed: 1, ..small_config(4) }).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn early_stopping_keeps_the_best_checkpoint() {
    let train_set = linear_task(150, 5);
    let valid = linear_task(60, 6);
    let data = TrainData {
        train: &train_set,
        valid: &valid,
        task: Task::Binary,
    };
    let spec = NetworkSpec::new(BackboneKind::KanRbf, 8, 1, Link::Sigmoid).with_hidden(&[6]);
    let cfg = TrainConfig {
        patience: 2,
        adam: selfshap_core::optim::AdamConfig {
            learning_rate: 0.3,
            ..Default::default()
        },
        ..small_config(40)
    };
    let out = train(data, spec, &cfg).unwrap();
    let best = out.history.iter().map(|r| r.valid.total).fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.best_epoch - 1].valid.total, best);
    let last = out.history.len();
    assert!(last < 40 || out.best_epoch + 2 > last);
    assert!(last >= out.best_epoch + 2 || last == 40);
}

#[test]
fn empty_splits_are_rejected() {
    let train_set = linear_task(20, 7);
    let empty = train_set.select(&[]);
    let spec = NetworkSpec::new(BackboneKind::Mlp, 8, 1, Link::Sigmoid).with_hidden(&[4]);
    let data = TrainData {
        train: &train_set,
        valid: &empty,
        task: Task::Binary,
    };
    assert!(matches!(train(data, spec, &small_config(1)), Err(Error::Empty(_))));
}

#[test]
fn regression_and_multiclass_train_with_local_accuracy() {
    let base = linear_task(300, 8);
    let n = 8;
    let reg_labels: Vec<f64> = (0..base.rows()).map(|r| base.row(r)[0] - 0.5 * base.row(r)[1]).collect();
    let reg = FeatureMatrix::new(n, base.values().to_vec(), reg_labels).unwrap();
    let cls_labels: Vec<f64> = (0..base.rows()).map(|r| (base.row(r)[0].clamp(-1.49, 1.49) + 1.5).floor()).collect();
    let cls = FeatureMatrix::new(n, base.values().to_vec(), cls_labels).unwrap();
    let (tr, va): (Vec<usize>, Vec<usize>) = (0..300).partition(|r| r % 4 != 0);
    for (m, task, d, link) in [
        (&reg, Task::Regression, 1, Link::Identity),
        (&cls, Task::Multiclass { classes: 3 }, 3, Link::Softmax),
    ] {
        let (train_set, valid) = (m.select(&tr), m.select(&va));
        let data = TrainData {
            train: &train_set,
            valid: &valid,
            task,
        };
        let mut spec = NetworkSpec::new(BackboneKind::KanSpline, n, d, link).with_hidden(&[8]);
        spec.relaxed = true;
        let cfg = TrainConfig {
            value_fn: selfshap_core::shapley::ValueFunctionKind::Marginal,
            background_size: 16,
            ..small_config(3)
        };
        let out = train(data, spec, &cfg).unwrap();
        assert_eq!(out.history.len(), 3);
        assert!(matches!(out.value_function, ValueFunction::Marginal { .. }));
        assert!(local_accuracy_gap(&out.network, &valid.to_tensor()).unwrap() <= 1e-6);
    }
}

/// Additive frozen model: a single linear layer whose attributions are
/// `w_i x_i`, so its game is additive.
fn additive_blackbox(n: usize, w: &[f64]) -> ShapNetwork {
    let spec = NetworkSpec::new(BackboneKind::Mlp, n, 1, Link::Identity).with_hidden(&[]);
    let mut net = ShapNetwork::new(spec, 0).unwrap();
    let selfshap_core::layers::Layer::Linear(layer) = &mut net.layers_mut()[0] else {
        panic!("linear layer expected")
    };
    let weight = layer.weight_mut();
    weight.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        weight[i * n + i] = w[i];
    }
    layer.bias_mut().iter_mut().for_each(|v| *v = 0.0);
    net
}

#[test]
fn amortized_explainer_recovers_an_additive_model() {
    let n = 5;
    let w = [1.5, -1.0, 0.5, 2.0, -0.25];
    let blackbox = additive_blackbox(n, &w);
    let frozen: Vec<f64> = blackbox.layers()[0].params().to_vec();
    let mut rng = Rng::new(9);
    let make = |rows: usize, rng: &mut Rng| {
        let values: Vec<f64> = (0..rows * n).map(|_| rng.normal()).collect();
        FeatureMatrix::new(n, values, vec![0.0; rows]).unwrap()
    };
    let (train_set, valid, test) = (make(800, &mut rng), make(200, &mut rng), make(50, &mut rng));
    let data = TrainData {
        train: &train_set,
        valid: &valid,
        task: Task::Regression,
    };
    let vf = ValueFunction::zeros(n);
    let spec = NetworkSpec::new(BackboneKind::Mlp, n, 1, Link::Identity).with_hidden(&[32, 32]);
    let cfg = TrainConfig {
        max_epochs: 60,
        ..small_config(60)
    };
    let out = train_fastshap(&blackbox, spec, data, &vf, &cfg).unwrap();
    assert_eq!(blackbox.layers()[0].params(), &frozen[..]);
    assert!(out.history.iter().all(|r| r.train.prediction == 0.0));
    let phi = fastshap_attributions(&out.explainer, &blackbox, &test.to_tensor(), &vf).unwrap();
    let mut cosines = Vec::new();
    for r in 0..test.rows() {
        let game = ModelGame::new(&blackbox, test.row(r), &vf, OutputSelection::All).unwrap();
        let exact = exact_shapley(&game).unwrap();
        cosines.push(cosine_similarity(&exact, phi.row(r)).unwrap());
    }
    let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
    assert!(mean >= 0.95, "mean cosine {mean}");
}
