use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kernels;
use crate::model::Mode;
use crate::rng::Rng;
use crate::tensor::{DType, Fill, Tensor};

/// Inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 − rate)`.
pub fn dropout_mask(dims: &[usize], rate: f64, dtype: DType, rng: &mut Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::BadRate(rate));
    }
    let keep = 1.0 / (1.0 - rate);
    let n: usize = dims.iter().product();
    let values: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::create(dims, Fill::Values(&values), dtype)
}

/// Eval mode is the identity; train mode applies a fresh mask from the stream.
pub fn dropout(x: &Tensor, rate: f64, mode: Mode<'_>) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::BadRate(rate));
    }
    match mode {
        Mode::Eval => Ok(x.clone()),
        Mode::Train(rng) => {
            let mask = dropout_mask(x.dims(), rate, x.dtype(), rng)?;
            kernels::mul(x, &mask)
        }
    }
}
