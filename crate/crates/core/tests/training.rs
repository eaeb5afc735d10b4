use claret_core::autodiff::Tape;
use claret_core::checkpoint::{import_backbone, save_checkpoint};
use claret_core::data::{synth_dataset, Dataset};
use claret_core::model::{build_claret, freeze_backbone, Backbone, ClaRetConfig, Mode, Model};
use claret_core::rng;
use claret_core::training::{evaluate, predict_labels, train, train_step, Metrics, TrainConfig};
use claret_core::{DType, Error};
use proptest::prelude::*;

fn tiny_model(dropout_rate: f64) -> Model {
    build_claret(&ClaRetConfig {
        n_conv_blocks: 2,
        filter_exponent_lo: 2,
        filter_exponent_hi: 3,
        dense_units: vec![16],
        dropout_rate,
        input_shape: (8, 8, 1),
        seed: 3,
        ..Default::default()
    })
    .unwrap()
}

fn tiny_data() -> Dataset {
    synth_dataset(6, 8, 11).unwrap()
}

fn cfg(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        batch_size: 5,
        epochs,
        seed: 21,
        ..Default::default()
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let (a, ha) = train(tiny_model(0.2), &tiny_data(), &cfg(3, 0.01)).unwrap();
    let (b, hb) = train(tiny_model(0.2), &tiny_data(), &cfg(3, 0.01)).unwrap();
    assert_eq!(ha, hb);
    for ((_, p), (_, q)) in a.params.iter().zip(b.params.iter()) {
        assert!(p.tensor.bitwise_eq(&q.tensor));
    }
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let before = tiny_model(0.0);
    let (after, history) = train(before.clone(), &tiny_data(), &cfg(3, 0.0)).unwrap();
    for ((_, p), (_, q)) in before.params.iter().zip(after.params.iter()) {
        assert!(p.tensor.bitwise_eq(&q.tensor));
    }
    let l0 = history[0].train_loss;
    assert!(history.iter().all(|r| (r.train_loss - l0).abs() < 1e-12), "{history:?}");
}

#[test]
fn records_stay_in_range() {
    let (_, history) = train(tiny_model(0.2), &tiny_data(), &cfg(2, 0.01)).unwrap();
    assert_eq!(history.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2]);
    for r in history {
        assert!(r.train_loss.is_finite());
        assert!((0.0..=1.0).contains(&r.train_accuracy));
        assert!((0.0..=1.0).contains(&r.val_accuracy));
    }
}

#[test]
fn class_count_and_empty_checked() {
    let model = build_claret(&ClaRetConfig {
        n_classes: 5,
        ..tiny_model(0.0).config
    })
    .unwrap();
    assert!(matches!(
        train(model, &tiny_data(), &cfg(1, 0.01)),
        Err(Error::ClassCountMismatch { model: 5, data: 4 })
    ));
    let empty = Dataset::new(vec![], tiny_data().class_names).unwrap();
    assert!(matches!(train(tiny_model(0.0), &empty, &cfg(1, 0.01)), Err(Error::EmptyDataset)));
    assert!(matches!(evaluate(&tiny_model(0.0), &empty), Err(Error::EmptyDataset)));
}

fn backbone_model() -> Model {
    build_claret(&ClaRetConfig {
        n_conv_blocks: 3,
        filter_exponent_lo: 2,
        filter_exponent_hi: 3,
        dense_units: vec![8],
        input_shape: (32, 32, 1),
        backbone: Backbone::Vgg19,
        dtype: DType::Single,
        seed: 5,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn imported_frozen_backbone_survives_training_steps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vgg.clrt");
    let donor = build_claret(&ClaRetConfig {
        seed: 99,
        ..backbone_model().config
    })
    .unwrap();
    save_checkpoint(&donor, &path).unwrap();

    let model = freeze_backbone(backbone_model(), 0).unwrap();
    let mut model = import_backbone(model, &path, true).unwrap();
    for name in model.backbone_param_names() {
        let (got, want) = (model.params.get(name).unwrap(), donor.params.tensor(name).unwrap());
        assert!(got.tensor.bitwise_eq(want), "{name}");
        assert!(!got.trainable);
    }
    let head_before = model.params.tensor("head.out.weight").unwrap().clone();
    let frozen = model.params.frozen_digest();

    let data = synth_dataset(2, 32, 1).unwrap();
    let all: Vec<usize> = (0..data.len()).collect();
    let (batch, labels) = data.batch(&all, DType::Single).unwrap();
    let mut drop = rng::seeded(0);
    for _ in 0..10 {
        train_step(&mut model, &batch, &labels, 0.01, 0.9, &mut drop).unwrap();
    }
    assert_eq!(model.params.frozen_digest(), frozen);
    assert!(!model.params.tensor("head.out.weight").unwrap().bitwise_eq(&head_before));
}

#[test]
fn frozen_digest_unchanged_by_train() {
    let model = backbone_model();
    let frozen = model.params.frozen_digest();
    let (after, _) = train(model, &synth_dataset(3, 32, 2).unwrap(), &cfg(1, 0.05)).unwrap();
    assert_eq!(after.params.frozen_digest(), frozen);
}

#[test]
fn evaluate_matches_recount() {
    let model = tiny_model(0.0);
    let data = tiny_data();
    let m = evaluate(&model, &data).unwrap();
    let preds = predict_labels(&model, &data).unwrap();
    let correct = preds.iter().zip(data.labels()).filter(|(p, t)| **p == *t).count();
    assert_eq!(m.accuracy, correct as f64 / data.len() as f64);
    // train-mode forwards with dropout off agree with eval predictions
    let mut tape = Tape::new();
    let b = model.params.bind_constant(&mut tape);
    let all: Vec<usize> = (0..data.len()).collect();
    let (x, _) = data.batch(&all, model.config.dtype).unwrap();
    let x = tape.constant(x);
    let mut r = rng::seeded(0);
    let p = model.forward(&mut tape, &b, x, Mode::Train(&mut r)).unwrap();
    assert_eq!(claret_core::training::argmax_rows(tape.value(p)).unwrap(), preds);
}

/// Brute-force metrics straight from the definitions.
fn oracle(c: usize, truth: &[usize], pred: &[usize]) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let n = truth.len();
    let correct = (0..n).filter(|&i| truth[i] == pred[i]).count();
    let (mut p, mut r, mut f) = (vec![], vec![], vec![]);
    for k in 0..c {
        let tp = (0..n).filter(|&i| truth[i] == k && pred[i] == k).count();
        let pp = (0..n).filter(|&i| pred[i] == k).count();
        let sup = (0..n).filter(|&i| truth[i] == k).count();
        let prec = if pp == 0 { 0.0 } else { tp as f64 / pp as f64 };
        let rec = if sup == 0 { 0.0 } else { tp as f64 / sup as f64 };
        p.push(prec);
        r.push(rec);
        f.push(if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) });
    }
    let macro_f1 = f.iter().sum::<f64>() / c as f64;
    (correct as f64 / n as f64, p, r, f, macro_f1)
}

proptest! {
    #[test]
    fn metrics_equal_brute_force(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = Metrics::from_predictions(4, &truth, &pred).unwrap();
        let (acc, p, r, f, mf) = oracle(4, &truth, &pred);
        prop_assert_eq!(m.accuracy, acc);
        prop_assert_eq!(&m.per_class_precision, &p);
        prop_assert_eq!(&m.per_class_recall, &r);
        prop_assert_eq!(&m.per_class_f1, &f);
        prop_assert_eq!(m.macro_f1, mf);
        prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        let trace: u64 = (0..4).map(|k| m.confusion[k][k]).sum();
        prop_assert_eq!(m.accuracy, trace as f64 / truth.len() as f64);
    }
}
