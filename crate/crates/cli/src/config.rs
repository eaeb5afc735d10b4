//! The `key=value` run configuration read by `claret train`.

use claret_core::model::config::{kv_lines, CONFIG_KEYS};
use claret_core::model::ClaRetConfig;
use claret_core::training::{TrainConfig, TRAIN_CONFIG_KEYS};
use claret_core::{Error, Result};

/// Conv-stage depths the command line accepts.
pub const ALLOWED_BLOCKS: [usize; 3] = [3, 5, 7];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub model: ClaRetConfig,
    pub train: TrainConfig,
    /// Whether the file fixed these; otherwise they follow the data.
    pub input_shape_set: bool,
    pub n_classes_set: bool,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, value) in kv_lines(text)? {
            // `seed` drives both model initialization and training streams
            let used_model = cfg.model.set(key, value)?;
            let used_train = cfg.train.set(key, value)?;
            if !(used_model || used_train) {
                let mut known: Vec<&str> = CONFIG_KEYS.iter().chain(TRAIN_CONFIG_KEYS).copied().collect();
                known.sort_unstable();
                known.dedup();
                return Err(Error::config(key, format!("unknown key (known: {})", known.join(", "))));
            }
            cfg.input_shape_set |= key == "input_shape";
            cfg.n_classes_set |= key == "n_classes";
        }
        if !ALLOWED_BLOCKS.contains(&cfg.model.n_conv_blocks) {
            return Err(Error::config("n_conv_blocks", "must be 3, 5 or 7"));
        }
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_keys_and_comments() {
        let cfg = RunConfig::parse("# run\nn_conv_blocks=3\nlearning_rate=0.05\nseed=9\n\nepochs = 2\n").unwrap();
        assert_eq!(cfg.model.n_conv_blocks, 3);
        assert_eq!(cfg.train.learning_rate, 0.05);
        assert_eq!((cfg.model.seed, cfg.train.seed), (9, 9));
        assert_eq!(cfg.train.epochs, 2);
        assert!(!cfg.input_shape_set);
    }

    #[test]
    fn four_blocks_rejected() {
        let err = RunConfig::parse("n_conv_blocks=4\n").unwrap_err();
        assert!(matches!(err, Error::BadConfig { ref key, .. } if key == "n_conv_blocks"));
    }

    #[test]
    fn typo_rejected() {
        let err = RunConfig::parse("learning_rte=0.1\n").unwrap_err();
        assert!(matches!(err, Error::BadConfig { ref key, .. } if key == "learning_rte"));
    }
}
