use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::config::{Backbone, ClaRetConfig, VGG19_CONV_LAYERS};
use crate::model::schedule::{conv_filter_schedule, dense_unit_schedule};
use crate::model::{Layer, Model, BACKBONE_PREFIX};
use crate::params::ParamSet;
use crate::rng::{self, streams, Rng};
use crate::tensor::{DType, Fill, Tensor};

/// VGG-19 convolution widths; `0` marks a 2×2 max-pool.
const VGG19_PLAN: [usize; 21] = [
    64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0,
];

/// Smallest spatial extent that survives the five backbone pools.
const VGG19_MIN_EXTENT: usize = 32;

/// How fresh parameters are filled.
#[derive(Clone, Copy)]
pub(crate) enum Init {
    /// Normal(0, √(2/fan_in)) weights, zero biases.
    He,
    /// Everything zero; for models whose tensors are loaded afterwards.
    Zeros,
}

/// The VGG-19 convolutional feature extractor without its classifier.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    pub layer_plan: Vec<Layer>,
    pub params: ParamSet,
    /// (height, width, channels) of the feature map.
    pub output_shape: (usize, usize, usize),
}

struct Builder {
    plan: Vec<Layer>,
    params: ParamSet,
    init: Init,
    dtype: DType,
    rng: Rng,
}

impl Builder {
    fn param(&mut self, name: String, dims: &[usize], fan_in: usize) -> Result<()> {
        let n: usize = dims.iter().product();
        let values: Vec<f64> = match self.init {
            Init::He => {
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite positive std");
                (0..n).map(|_| normal.sample(&mut self.rng)).collect()
            }
            Init::Zeros => vec![0.0; n],
        };
        let t = Tensor::create(dims, Fill::Values(&values), self.dtype)?;
        self.params.insert(name, t, true)
    }

    fn conv(&mut self, prefix: &str, k: usize, cin: usize, cout: usize) -> Result<()> {
        let (weight, bias) = (format!("{prefix}.weight"), format!("{prefix}.bias"));
        self.param(weight.clone(), &[k, k, cin, cout], k * k * cin)?;
        self.params.insert(bias.clone(), Tensor::zeros(&[cout], self.dtype)?, true)?;
        self.plan.push(Layer::Conv { weight, bias });
        Ok(())
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, units: usize) -> Result<()> {
        let (weight, bias) = (format!("{prefix}.weight"), format!("{prefix}.bias"));
        self.param(weight.clone(), &[fan_in, units], fan_in)?;
        self.params.insert(bias.clone(), Tensor::zeros(&[units], self.dtype)?, true)?;
        self.plan.push(Layer::Dense { weight, bias });
        Ok(())
    }
}

fn vgg19(b: &mut Builder, (h, w, c): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
    if h < VGG19_MIN_EXTENT || w < VGG19_MIN_EXTENT {
        return Err(Error::InputTooSmall { height: h, width: w });
    }
    let (mut h, mut w, mut c) = (h, w, c);
    let mut index = 0;
    for &width in &VGG19_PLAN {
        if width == 0 {
            b.plan.push(Layer::MaxPool);
            h /= 2;
            w /= 2;
        } else {
            index += 1;
            b.conv(&format!("{BACKBONE_PREFIX}conv{index:02}"), 3, c, width)?;
            b.plan.push(Layer::Relu);
            c = width;
        }
    }
    debug_assert_eq!(index, VGG19_CONV_LAYERS);
    Ok((h, w, c))
}

/// He-initialized VGG-19 features for `input_shape`, all layers trainable.
pub fn build_vgg19_features(input_shape: (usize, usize, usize), seed: u64) -> Result<FeatureStack> {
    let mut b = Builder {
        plan: Vec::new(),
        params: ParamSet::new(),
        init: Init::He,
        dtype: DType::Single,
        rng: rng::stream(seed, streams::BACKBONE_INIT),
    };
    let output_shape = vgg19(&mut b, input_shape)?;
    Ok(FeatureStack {
        layer_plan: b.plan,
        params: b.params,
        output_shape,
    })
}

pub(crate) fn assemble(config: &ClaRetConfig, init: Init) -> Result<Model> {
    config.validate()?;
    let filters = conv_filter_schedule(config.n_conv_blocks, config.filter_exponent_lo, config.filter_exponent_hi)?;
    let units = dense_unit_schedule(config)?;
    let mut b = Builder {
        plan: Vec::new(),
        params: ParamSet::new(),
        init,
        dtype: config.dtype,
        rng: rng::stream(config.seed, streams::BACKBONE_INIT),
    };

    let (mut h, mut w, mut c) = match config.backbone {
        Backbone::Vgg19 => vgg19(&mut b, config.input_shape)?,
        Backbone::None => config.input_shape,
    };

    b.rng = rng::stream(config.seed, streams::HEAD_INIT);
    let rate = config.dropout_rate;
    for (i, &f) in filters.iter().enumerate() {
        b.conv(&format!("head.conv{}", i + 1), config.kernel_size, c, f)?;
        b.plan.push(Layer::Relu);
        if h >= 2 && w >= 2 {
            b.plan.push(Layer::MaxPool);
            h /= 2;
            w /= 2;
        }
        b.plan.push(Layer::Dropout { rate });
        c = f;
    }

    b.plan.push(Layer::Flatten);
    let mut fan_in = h * w * c;
    for (j, &u) in units.iter().enumerate() {
        b.dense(&format!("head.dense{}", j + 1), fan_in, u)?;
        b.plan.push(Layer::Relu);
        b.plan.push(Layer::Dropout { rate });
        fan_in = u;
    }
    b.dense("head.out", fan_in, config.n_classes)?;
    b.plan.push(Layer::Softmax);

    let model = Model {
        config: config.clone(),
        params: b.params,
        layer_plan: b.plan,
        class_names: Vec::new(),
    };
    freeze_backbone(model, config.resolved_freeze_depth())
}

/// Builds and He-initializes the full model described by `config`.
pub fn build_claret(config: &ClaRetConfig) -> Result<Model> {
    assemble(config, Init::He)
}

/// Marks the first `depth` backbone convolutions frozen and every other
/// parameter trainable.
pub fn freeze_backbone(mut model: Model, depth: usize) -> Result<Model> {
    let layers: Vec<(String, String)> = model
        .backbone_layers()
        .into_iter()
        .map(|(w, b)| (w.to_string(), b.to_string()))
        .collect();
    if depth > layers.len() {
        return Err(Error::DepthExceeded {
            depth,
            available: layers.len(),
        });
    }
    for (_, p) in model.params.iter_mut() {
        p.trainable = true;
    }
    for (w, b) in &layers[..depth] {
        model.params.set_trainable(w, false)?;
        model.params.set_trainable(b, false)?;
    }
    model.config.freeze_depth = Some(depth);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(blocks: usize) -> ClaRetConfig {
        ClaRetConfig {
            n_conv_blocks: blocks,
            dense_units: vec![32, 16],
            input_shape: (32, 32, 3),
            ..Default::default()
        }
    }

    fn backbone_cfg() -> ClaRetConfig {
        ClaRetConfig {
            n_conv_blocks: 3,
            filter_exponent_lo: 2,
            filter_exponent_hi: 3,
            dense_units: vec![8],
            input_shape: (32, 32, 3),
            backbone: Backbone::Vgg19,
            ..Default::default()
        }
    }

    #[test]
    fn vgg_feature_extents() {
        assert_eq!(build_vgg19_features((224, 224, 3), 0).unwrap().output_shape, (7, 7, 512));
        let f = build_vgg19_features((32, 32, 3), 0).unwrap();
        assert_eq!(f.output_shape, (1, 1, 512));
        assert_eq!(f.params.len(), 32);
        assert!(matches!(
            build_vgg19_features((16, 16, 3), 0),
            Err(Error::InputTooSmall { height: 16, width: 16 })
        ));
    }

    #[test]
    fn five_block_spatial_trace() {
        let m = build_claret(&small(5)).unwrap();
        let pools: Vec<usize> = m
            .layer_plan
            .iter()
            .zip(m.shape_trace(1))
            .filter(|(l, _)| matches!(l, Layer::MaxPool))
            .map(|(_, s)| s[1])
            .collect();
        assert_eq!(pools, vec![16, 8, 4, 2, 1]);
        assert_eq!(m.shape_trace(2).last().unwrap(), &vec![2, 4]);
    }

    #[test]
    fn seven_blocks_skip_late_pools() {
        let m = build_claret(&small(7)).unwrap();
        let pools = m.layer_plan.iter().filter(|l| matches!(l, Layer::MaxPool)).count();
        assert_eq!(pools, 5);
    }

    #[test]
    fn he_statistics() {
        let m = build_claret(&small(3)).unwrap();
        // fan_in 3·3·16 = 144 sampled 16·64 = 9216 times; sd of the sample sd ≈ σ/√(2n)
        let w = m.params.tensor("head.conv2.weight").unwrap().to_f64_vec();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expect = (2.0f64 / 144.0).sqrt();
        assert!((sd - expect).abs() < 5.0 * expect / (2.0 * n).sqrt(), "{sd} vs {expect}");
        assert!(m.params.tensor("head.conv2.bias").unwrap().to_f64_vec().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_claret(&small(3)).unwrap();
        let b = build_claret(&small(3)).unwrap();
        assert_eq!(a.params, b.params);
        let c = build_claret(&ClaRetConfig { seed: 1, ..small(3) }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn freeze_depths() {
        let m = build_claret(&backbone_cfg()).unwrap();
        let head = m.params.len() - 32;
        assert_eq!(m.params.trainable_count(), head);
        let all = freeze_backbone(m.clone(), 0).unwrap();
        assert_eq!(all.params.trainable_count(), all.params.len());
        let two = freeze_backbone(m.clone(), 2).unwrap();
        assert!(!two.params.get("backbone.conv02.bias").unwrap().trainable);
        assert!(two.params.get("backbone.conv03.weight").unwrap().trainable);
        assert!(matches!(
            freeze_backbone(m, 17),
            Err(Error::DepthExceeded { depth: 17, available: 16 })
        ));
    }

    #[test]
    fn backbone_feeds_head_at_one_by_one() {
        let m = build_claret(&backbone_cfg()).unwrap();
        let conv1 = m.params.tensor("head.conv1.weight").unwrap();
        assert_eq!(conv1.dims(), &[3, 3, 512, 4]);
    }

    #[test]
    fn zero_init_has_same_layout() {
        let he = build_claret(&small(3)).unwrap();
        let zero = assemble(&small(3), Init::Zeros).unwrap();
        let names = |m: &Model| m.params.names().map(String::from).collect::<Vec<_>>();
        assert_eq!(names(&he), names(&zero));
        assert_eq!(he.layer_plan, zero.layer_plan);
    }
}
