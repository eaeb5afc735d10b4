//! Power-of-two width schedules for the convolution and dense stages.

use crate::error::{Error, Result};
use crate::model::config::ClaRetConfig;

/// `2^e` for `n` exponents evenly spaced from `from` to `to`, each rounded
/// half-up. Works in either direction; the endpoints are always exact.
pub fn log2_schedule(n: usize, from: i32, to: i32) -> Vec<usize> {
    if n == 1 {
        return vec![1usize << from];
    }
    (0..n)
        .map(|i| {
            let e = from as f64 + (to - from) as f64 * i as f64 / (n - 1) as f64;
            1usize << ((e + 0.5).floor() as u32)
        })
        .collect()
}

/// Filter counts growing from `2^lo_exp` to `2^hi_exp` over `n_blocks`.
pub fn conv_filter_schedule(n_blocks: usize, lo_exp: i32, hi_exp: i32) -> Result<Vec<usize>> {
    if lo_exp > hi_exp {
        return Err(Error::BadRange { lo: lo_exp, hi: hi_exp });
    }
    if n_blocks == 0 {
        return Err(Error::config("n_conv_blocks", "must be at least 1"));
    }
    Ok(log2_schedule(n_blocks, lo_exp, hi_exp))
}

/// The ReLU dense-stage widths. The softmax output layer is not included.
pub fn dense_unit_schedule(config: &ClaRetConfig) -> Result<Vec<usize>> {
    if config.dense_units.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::NotDecreasing(config.dense_units.clone()));
    }
    Ok(config.dense_units.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_block_filters() {
        assert_eq!(conv_filter_schedule(5, 4, 8).unwrap(), vec![16, 32, 64, 128, 256]);
    }

    #[test]
    fn single_block() {
        assert_eq!(conv_filter_schedule(1, 4, 4).unwrap(), vec![16]);
    }

    #[test]
    fn three_blocks_skip_odd_exponents() {
        // linspace(4, 8, 3) = (4, 6, 8)
        assert_eq!(conv_filter_schedule(3, 4, 8).unwrap(), vec![16, 64, 256]);
    }

    #[test]
    fn seven_blocks_round_half_up() {
        // linspace(4, 8, 7) = 4, 4.67, 5.33, 6, 6.67, 7.33, 8
        assert_eq!(
            conv_filter_schedule(7, 4, 8).unwrap(),
            vec![16, 32, 32, 64, 128, 128, 256]
        );
    }

    #[test]
    fn reversed_range_rejected() {
        assert!(matches!(conv_filter_schedule(3, 8, 4), Err(Error::BadRange { lo: 8, hi: 4 })));
    }

    #[test]
    fn dense_default_and_passthrough() {
        let cfg = ClaRetConfig::default();
        assert_eq!(dense_unit_schedule(&cfg).unwrap(), vec![1024, 512, 256, 64, 32]);
        let two = ClaRetConfig {
            dense_units: vec![128, 64],
            ..Default::default()
        };
        assert_eq!(dense_unit_schedule(&two).unwrap(), vec![128, 64]);
        let up = ClaRetConfig {
            dense_units: vec![64, 128],
            ..Default::default()
        };
        assert!(matches!(dense_unit_schedule(&up), Err(Error::NotDecreasing(_))));
    }

    #[test]
    fn decreasing_log_schedule() {
        // exponents 10, 8.75, 7.5, 6.25, 5 -> 10, 9, 8, 6, 5
        assert_eq!(log2_schedule(5, 10, 5), vec![1024, 512, 256, 64, 32]);
    }
}
