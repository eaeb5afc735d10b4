use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// Rows scored per forward pass during evaluation.
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Derives every field from a square confusion matrix. Any ratio with a
    /// zero denominator is 0.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Metrics {
        let c = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..c).map(|i| confusion[i][i]).sum();
        let mut precision = Vec::with_capacity(c);
        let mut recall = Vec::with_capacity(c);
        let mut f1 = Vec::with_capacity(c);
        for k in 0..c {
            let tp = confusion[k][k];
            let predicted: u64 = (0..c).map(|i| confusion[i][k]).sum();
            let support: u64 = confusion[k].iter().sum();
            let (p, r) = (ratio(tp, predicted), ratio(tp, support));
            precision.push(p);
            recall.push(r);
            f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        let macro_f1 = if c == 0 { 0.0 } else { f1.iter().sum::<f64>() / c as f64 };
        Metrics {
            confusion,
            accuracy: ratio(trace, total),
            per_class_precision: precision,
            per_class_recall: recall,
            per_class_f1: f1,
            macro_f1,
        }
    }

    pub fn from_predictions(n_classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Metrics> {
        if truth.len() != predicted.len() {
            return Err(Error::shape(format!("{} labels, {} predictions", truth.len(), predicted.len())));
        }
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            let label = t.max(p);
            if label >= n_classes {
                return Err(Error::LabelOutOfRange { label, classes: n_classes });
            }
            confusion[t][p] += 1;
        }
        Ok(Metrics::from_confusion(confusion))
    }
}

/// Index of the largest entry in each row; the lowest index wins ties.
pub fn argmax_rows(probs: &Tensor) -> Result<Vec<usize>> {
    let &[_, c] = probs.dims() else {
        return Err(Error::shape(format!("argmax needs [N, C], got {}", probs.shape())));
    };
    if c == 0 {
        return Err(Error::shape("argmax over zero classes"));
    }
    Ok(probs
        .to_f64_vec()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Eval-mode predicted class for every sample, in dataset order.
pub fn predict_labels(model: &Model, data: &Dataset) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let (batch, _) = data.batch(chunk, model.config.dtype)?;
        out.extend(argmax_rows(&model.predict(&batch)?)?);
    }
    Ok(out)
}

pub fn evaluate(model: &Model, data: &Dataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.n_classes() != model.config.n_classes {
        return Err(Error::ClassCountMismatch {
            model: model.config.n_classes,
            data: data.n_classes(),
        });
    }
    let predicted = predict_labels(model, data)?;
    Metrics::from_predictions(model.config.n_classes, &data.labels(), &predicted)
}
