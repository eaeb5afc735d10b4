//! Loss, SGD with momentum, the training loop, metrics, and splitting.

mod metrics;
mod split;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::autodiff::{Gradients, Tape};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels;
use crate::model::{Mode, Model};
use crate::params::{Bindings, ParamSet};
use crate::rng::{self, streams, Rng};
use crate::tensor::Tensor;

pub use metrics::{argmax_rows, evaluate, predict_labels, Metrics};
pub use split::{split_counts, split_dataset};

/// Gradients keyed by parameter name.
pub type NamedGradients = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Train, validation, and test fractions.
    pub split: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            split: [0.8, 0.1, 0.1],
        }
    }
}

pub const TRAIN_CONFIG_KEYS: &[&str] = &["learning_rate", "momentum", "batch_size", "epochs", "seed", "split"];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero rate is accepted: it gives a frozen-weights baseline run
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        split_counts(0, self.split)?;
        Ok(())
    }

    /// Sets one field from text; `Ok(false)` for keys this config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "split" => {
                let parts: Vec<f64> = value.split(',').map(|v| parse(key, v)).collect::<Result<_>>()?;
                let &[a, b, c] = parts.as_slice() else {
                    return Err(Error::config(key, "expected three comma-separated fractions"));
                };
                self.split = [a, b, c];
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's train-mode forward passes.
    pub train_loss: f64,
    /// Fraction of training samples classified correctly by the train-mode
    /// forward passes of this epoch.
    pub train_accuracy: f64,
    /// Eval-mode accuracy on the validation split; 0 when it is empty.
    pub val_accuracy: f64,
}

/// Mean clamped negative log-likelihood of `labels` under `probs`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(kernels::cross_entropy(probs, labels)?.item())
}

/// `v ← m·v + g`, `θ ← θ − lr·v` for every trainable entry. Frozen entries
/// and their buffers are left alone, whatever gradients are supplied.
pub fn sgd_momentum_step(params: &mut ParamSet, grads: &NamedGradients, lr: f64, momentum: f64) -> Result<()> {
    for (name, p) in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        let g = grads
            .get(name)
            .ok_or_else(|| Error::shape(format!("no gradient for trainable parameter {name}")))?;
        if g.dims() != p.tensor.dims() {
            return Err(Error::shape(format!(
                "gradient {} does not match parameter {name} {}",
                g.shape(),
                p.tensor.shape()
            )));
        }
        let (theta, v) = kernels::momentum_update(&p.tensor, &p.momentum, g, lr, momentum)?;
        p.tensor = theta;
        p.momentum = v;
    }
    Ok(())
}

fn named(params: &ParamSet, bindings: &Bindings, grads: &Gradients) -> NamedGradients {
    params
        .iter()
        .filter_map(|(name, _)| {
            let g = grads.get(&bindings.get(name)?)?;
            Some((name.to_string(), g.clone()))
        })
        .collect()
}

/// Loss and correct-prediction count of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Batch-mean loss as computed on the tape.
    pub loss: f64,
    /// Per-sample losses summed in double precision. Each sample's
    /// probabilities do not depend on its batch mates, so this sum is
    /// insensitive to how an epoch is batched.
    pub loss_sum: f64,
    pub correct: usize,
}

/// One train-mode forward, backward, and momentum update on a batch.
pub fn train_step(
    model: &mut Model,
    batch: &Tensor,
    labels: &[usize],
    lr: f64,
    momentum: f64,
    dropout_rng: &mut Rng,
) -> Result<StepStats> {
    model.check_batch(batch)?;
    let mut tape = Tape::new();
    let bindings = model.params.bind(&mut tape);
    let input = tape.constant(batch.cast(model.config.dtype));
    let probs = model.forward(&mut tape, &bindings, input, Mode::Train(dropout_rng))?;
    let loss_node = tape.cross_entropy(probs, labels)?;
    let loss = tape.value(loss_node).item();
    if !loss.is_finite() {
        return Err(Error::NonFinite(loss));
    }
    let p = tape.value(probs);
    let correct = argmax_rows(p)?.iter().zip(labels).filter(|(p, t)| p == t).count();
    let c = p.dims()[1];
    let loss_sum = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -p.get(i * c + y).max(kernels::PROB_FLOOR).ln())
        .sum();
    let grads = tape.backward(loss_node)?;
    let grads = named(&model.params, &bindings, &grads);
    sgd_momentum_step(&mut model.params, &grads, lr, momentum)?;
    Ok(StepStats { loss, loss_sum, correct })
}

/// Splits `data`, then runs `cfg.epochs` shuffled mini-batch epochs over the
/// training part. Split, shuffle order, and dropout masks all come from
/// streams of `cfg.seed`, so equal inputs give bitwise-equal results.
pub fn train(mut model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<(Model, Vec<EpochRecord>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.n_classes() != model.config.n_classes {
        return Err(Error::ClassCountMismatch {
            model: model.config.n_classes,
            data: data.n_classes(),
        });
    }
    let (train_set, val_set, _) = split_dataset(data, cfg.split, cfg.seed)?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut shuffle = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut dropout = rng::stream(cfg.seed, streams::DROPOUT);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let (batch, labels) = train_set.batch(chunk, model.config.dtype)?;
            let s = train_step(&mut model, &batch, &labels, cfg.learning_rate, cfg.momentum, &mut dropout)?;
            loss_sum += s.loss_sum;
            correct += s.correct;
        }
        let val_accuracy = if val_set.is_empty() {
            0.0
        } else {
            evaluate(&model, &val_set)?.accuracy
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_accuracy,
        });
    }
    Ok((model, history))
}
