//! The ClaRet architecture: width schedules, the VGG-19-shaped backbone,
//! block assembly, freezing, and the forward pass.

mod build;
pub mod config;
mod dropout;
pub mod schedule;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamSet};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub(crate) use build::{assemble, Init};
pub use build::{build_claret, build_vgg19_features, freeze_backbone, FeatureStack};
pub use config::{Backbone, ClaRetConfig};
pub use dropout::{dropout, dropout_mask};
pub use schedule::{conv_filter_schedule, dense_unit_schedule};

/// Name prefix of every backbone parameter.
pub const BACKBONE_PREFIX: &str = "backbone.";

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// SAME-padded convolution at stride 1.
    Conv { weight: String, bias: String },
    Relu,
    MaxPool,
    Dropout { rate: f64 },
    Flatten,
    Dense { weight: String, bias: String },
    Softmax,
}

impl Layer {
    pub fn param_names(&self) -> Option<(&str, &str)> {
        match self {
            Layer::Conv { weight, bias } | Layer::Dense { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }
}

pub enum Mode<'a> {
    /// Dropout active, masks drawn from the stream.
    Train(&'a mut Rng),
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ClaRetConfig,
    pub params: ParamSet,
    pub layer_plan: Vec<Layer>,
    /// Class labels in index order; empty when unknown.
    pub class_names: Vec<String>,
}

impl Model {
    /// `(weight, bias)` names of the backbone convolutions in forward order.
    pub fn backbone_layers(&self) -> Vec<(&str, &str)> {
        self.layer_plan
            .iter()
            .filter_map(Layer::param_names)
            .filter(|(w, _)| w.starts_with(BACKBONE_PREFIX))
            .collect()
    }

    pub fn backbone_param_names(&self) -> Vec<&str> {
        self.backbone_layers().into_iter().flat_map(|(w, b)| [w, b]).collect()
    }

    /// Records the layer plan on `tape` and returns the probability node.
    pub fn forward(&self, tape: &mut Tape, bindings: &Bindings, input: NodeId, mut mode: Mode<'_>) -> Result<NodeId> {
        let mut x = input;
        for layer in &self.layer_plan {
            x = match layer {
                Layer::Conv { weight, bias } => tape.conv2d_same(x, bindings[weight.as_str()], bindings[bias.as_str()], 1)?,
                Layer::Relu => tape.relu(x),
                Layer::MaxPool => tape.maxpool2(x)?,
                Layer::Dropout { rate } => match &mut mode {
                    Mode::Train(rng) if *rate > 0.0 => {
                        let v = tape.value(x);
                        let mask = dropout_mask(v.dims(), *rate, v.dtype(), rng)?;
                        tape.dropout(x, mask)?
                    }
                    _ => x,
                },
                Layer::Flatten => tape.flatten(x)?,
                Layer::Dense { weight, bias } => {
                    let z = tape.matmul(x, bindings[weight.as_str()])?;
                    tape.add_bias(z, bindings[bias.as_str()])?
                }
                Layer::Softmax => tape.softmax_rows(x)?,
            };
        }
        Ok(x)
    }

    pub fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let (h, w, c) = self.config.input_shape;
        match batch.dims() {
            &[_, bh, bw, bc] if (bh, bw, bc) == (h, w, c) => Ok(()),
            dims => Err(Error::shape(format!(
                "batch {dims:?} does not match model input [N, {h}, {w}, {c}]"
            ))),
        }
    }

    /// Eval-mode class probabilities, one row per batch element.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let bindings = self.params.bind_constant(&mut tape);
        let input = tape.constant(batch.cast(self.config.dtype));
        let out = self.forward(&mut tape, &bindings, input, Mode::Eval)?;
        Ok(tape.value(out).clone())
    }

    /// Output extents after every layer for an `[n, H, W, C]` input.
    pub fn shape_trace(&self, n: usize) -> Vec<Vec<usize>> {
        let (h, w, c) = self.config.input_shape;
        trace_shapes(&self.layer_plan, &self.params, vec![n, h, w, c])
    }
}

pub(crate) fn trace_shapes(plan: &[Layer], params: &ParamSet, input: Vec<usize>) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = input;
    for layer in plan {
        cur = match layer {
            Layer::Conv { weight, .. } => {
                let k = params.tensor(weight).expect("planned parameter").dims();
                vec![cur[0], cur[1], cur[2], k[3]]
            }
            Layer::MaxPool => vec![cur[0], cur[1] / 2, cur[2] / 2, cur[3]],
            Layer::Flatten => vec![cur[0], cur[1..].iter().product()],
            Layer::Dense { weight, .. } => {
                let k = params.tensor(weight).expect("planned parameter").dims();
                vec![cur[0], k[1]]
            }
            Layer::Relu | Layer::Dropout { .. } | Layer::Softmax => cur,
        };
        out.push(cur.clone());
    }
    out
}
