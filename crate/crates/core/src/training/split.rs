use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Tolerance on the fraction sum.
const SUM_TOLERANCE: f64 = 1e-9;

/// `(train, val, test)` sizes: val and test are `round(n·f)`, train takes
/// the remainder.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> Result<(usize, usize, usize)> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::BadFractions(fractions));
    }
    let val = ((n as f64 * fractions[1]).round() as usize).min(n);
    let test = ((n as f64 * fractions[2]).round() as usize).min(n - val);
    Ok((n - val - test, val, test))
}

/// Seeded shuffle, then contiguous train / val / test runs.
pub fn split_dataset(data: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (train, val, _) = split_counts(data.len(), fractions)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::stream(seed, streams::SPLIT));
    Ok((
        data.subset(&order[..train]),
        data.subset(&order[train..train + val]),
        data.subset(&order[train + val..]),
    ))
}
