//! Central-difference verification of tape gradients.

use rand::seq::SliceRandom;

use crate::autodiff::{Fault, NodeId, Tape};
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamSet};
use crate::rng;
use crate::tensor::DType;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub seed: u64,
    /// Tensors larger than this are checked on a seeded random subset of
    /// this many coordinates. Never below 64.
    pub coords_per_tensor: usize,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            seed: 0,
            coords_per_tensor: 64,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose ±eps probe changed a ReLU sign or a pooling winner;
    /// the finite difference is meaningless there, so another coordinate
    /// was drawn instead.
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_relative_error: f64,
}

/// `|a − n| / max(|a|, |n|, 1e−8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(params: &ParamSet, build: &F, fault: Option<Fault>) -> Result<(f64, Tape, NodeId, Bindings)>
where
    F: Fn(&mut Tape, &Bindings) -> Result<NodeId>,
{
    let mut tape = Tape::with_fault(fault);
    let bindings = params.bind(&mut tape);
    let loss = build(&mut tape, &bindings)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    Ok((value, tape, loss, bindings))
}

/// Compares the tape gradient of every trainable parameter against
/// `(L(θ+eps) − L(θ−eps)) / 2eps`. `build` records the loss on a fresh tape
/// from the bound parameters and must be deterministic (freeze any dropout
/// mask by reseeding inside it).
pub fn grad_check<F>(params: &ParamSet, build: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bindings) -> Result<NodeId>,
{
    if let Some((name, _)) = params.iter().find(|(_, p)| p.tensor.dtype() != DType::Double) {
        return Err(Error::DtypeMismatch(format!(
            "gradient checks run in double precision; {name} is single"
        )));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::config("eps", "must be positive"));
    }
    let cap = opts.coords_per_tensor.max(64);

    let (_, tape, loss, bindings) = evaluate(params, &build, opts.fault)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<(String, Vec<f64>)> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(name, _)| (name.to_string(), grads[&bindings[name]].to_f64_vec()))
        .collect();
    let base_signature = tape.branch_signature();
    drop(tape);

    let mut work = params.clone();
    let mut tensors = Vec::new();
    let mut overall: f64 = 0.0;
    for (t_idx, (name, grad)) in analytic.iter().enumerate() {
        let n = grad.len();
        let mut order: Vec<usize> = (0..n).collect();
        if n > cap {
            let mut r = rng::stream(rng::derive_seed(opts.seed, t_idx as u64), rng::streams::GRADCHECK);
            order.shuffle(&mut r);
        }
        let mut check = TensorCheck {
            name: name.clone(),
            checked: 0,
            skipped_kinks: 0,
            max_relative_error: 0.0,
        };
        for &i in &order {
            if check.checked >= cap {
                break;
            }
            let original = work.tensor(name).expect("bound above").get(i);
            let probe = |delta: f64, work: &mut ParamSet| -> Result<(f64, bool)> {
                work.get_mut(name).expect("bound above").tensor.set(i, original + delta);
                let (l, t, _, _) = evaluate(work, &build, None)?;
                Ok((l, t.branch_signature() == base_signature))
            };
            let plus = probe(opts.eps, &mut work);
            let minus = probe(-opts.eps, &mut work);
            work.get_mut(name).expect("bound above").tensor.set(i, original);
            let ((lp, same_p), (lm, same_m)) = (plus?, minus?);
            if !(same_p && same_m) {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.eps);
            let err = relative_error(grad[i], numeric);
            check.max_relative_error = check.max_relative_error.max(err);
            check.checked += 1;
        }
        overall = overall.max(check.max_relative_error);
        tensors.push(check);
    }
    Ok(GradCheckReport {
        tensors,
        max_relative_error: overall,
    })
}
