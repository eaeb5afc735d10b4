use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::schedule::log2_schedule;
use crate::tensor::DType;

/// Number of parameterized (convolution) layers in the VGG-19 feature stack.
pub const VGG19_CONV_LAYERS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backbone {
    None,
    Vgg19,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::None => "none",
            Backbone::Vgg19 => "vgg19",
        }
    }

    pub fn layer_count(self) -> usize {
        match self {
            Backbone::None => 0,
            Backbone::Vgg19 => VGG19_CONV_LAYERS,
        }
    }
}

/// Full architecture description of a ClaRet model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaRetConfig {
    pub n_conv_blocks: usize,
    pub filter_exponent_lo: i32,
    pub filter_exponent_hi: i32,
    pub kernel_size: usize,
    pub dense_units: Vec<usize>,
    pub dropout_rate: f64,
    pub n_classes: usize,
    /// (height, width, channels)
    pub input_shape: (usize, usize, usize),
    pub backbone: Backbone,
    /// Leading backbone layers to freeze; `None` means all of them.
    pub freeze_depth: Option<usize>,
    pub seed: u64,
    pub dtype: DType,
}

impl Default for ClaRetConfig {
    fn default() -> Self {
        ClaRetConfig {
            n_conv_blocks: 5,
            filter_exponent_lo: 4,
            filter_exponent_hi: 8,
            kernel_size: 3,
            // exponents 10, 8.75, 7.5, 6.25, 5 rounded half-up
            dense_units: log2_schedule(5, 10, 5),
            dropout_rate: 0.2,
            n_classes: 4,
            input_shape: (224, 224, 3),
            backbone: Backbone::None,
            freeze_depth: None,
            seed: 0,
            dtype: DType::Single,
        }
    }
}

/// Keys accepted by [`ClaRetConfig::set`], in serialization order.
pub const CONFIG_KEYS: &[&str] = &[
    "n_conv_blocks",
    "filter_exponent_lo",
    "filter_exponent_hi",
    "kernel_size",
    "dense_units",
    "dropout_rate",
    "n_classes",
    "input_shape",
    "backbone",
    "freeze_depth",
    "seed",
    "dtype",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn join(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ClaRetConfig {
    pub fn resolved_freeze_depth(&self) -> usize {
        self.freeze_depth.unwrap_or(self.backbone.layer_count())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_conv_blocks == 0 {
            return Err(Error::config("n_conv_blocks", "must be at least 1"));
        }
        if self.filter_exponent_lo > self.filter_exponent_hi {
            return Err(Error::BadRange {
                lo: self.filter_exponent_lo,
                hi: self.filter_exponent_hi,
            });
        }
        if self.filter_exponent_lo < 0 || self.filter_exponent_hi > 16 {
            return Err(Error::config("filter_exponent_lo", "exponents must lie in [0, 16]"));
        }
        if self.kernel_size == 0 {
            return Err(Error::config("kernel_size", "must be at least 1"));
        }
        if self.dense_units.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::NotDecreasing(self.dense_units.clone()));
        }
        if self.dense_units.contains(&0) {
            return Err(Error::config("dense_units", "units must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::BadRate(self.dropout_rate));
        }
        if self.n_classes < 2 {
            return Err(Error::config("n_classes", "need at least 2 classes"));
        }
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::config("input_shape", "extents must be positive"));
        }
        if self.backbone == Backbone::Vgg19 && (h < 32 || w < 32) {
            return Err(Error::InputTooSmall { height: h, width: w });
        }
        let layers = self.backbone.layer_count();
        if self.resolved_freeze_depth() > layers {
            return Err(Error::DepthExceeded {
                depth: self.resolved_freeze_depth(),
                available: layers,
            });
        }
        Ok(())
    }

    /// Sets one field from its textual form. Returns `Ok(false)` for keys
    /// this config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "n_conv_blocks" => self.n_conv_blocks = parse(key, value)?,
            "filter_exponent_lo" => self.filter_exponent_lo = parse(key, value)?,
            "filter_exponent_hi" => self.filter_exponent_hi = parse(key, value)?,
            "kernel_size" => self.kernel_size = parse(key, value)?,
            "dense_units" => self.dense_units = parse_list(key, value)?,
            "dropout_rate" => self.dropout_rate = parse(key, value)?,
            "n_classes" => self.n_classes = parse(key, value)?,
            "input_shape" => {
                let dims = parse_list(key, value)?;
                let &[h, w, c] = dims.as_slice() else {
                    return Err(Error::config(key, "expected H,W,C"));
                };
                self.input_shape = (h, w, c);
            }
            "backbone" => {
                self.backbone = match value.trim() {
                    "none" => Backbone::None,
                    "vgg19" => Backbone::Vgg19,
                    other => return Err(Error::config(key, format!("unknown backbone {other:?}"))),
                }
            }
            "freeze_depth" => self.freeze_depth = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "dtype" => {
                self.dtype = DType::parse(value.trim())
                    .ok_or_else(|| Error::config(key, format!("unknown dtype {value:?}")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// One `key=value` line per field, in [`CONFIG_KEYS`] order.
    pub fn to_text(&self) -> String {
        let (h, w, c) = self.input_shape;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        line("n_conv_blocks", self.n_conv_blocks.to_string());
        line("filter_exponent_lo", self.filter_exponent_lo.to_string());
        line("filter_exponent_hi", self.filter_exponent_hi.to_string());
        line("kernel_size", self.kernel_size.to_string());
        line("dense_units", join(&self.dense_units));
        // `{:?}` prints the shortest string that parses back to the same f64
        line("dropout_rate", format!("{:?}", self.dropout_rate));
        line("n_classes", self.n_classes.to_string());
        line("input_shape", format!("{h},{w},{c}"));
        line("backbone", self.backbone.name().to_string());
        line("freeze_depth", self.resolved_freeze_depth().to_string());
        line("seed", self.seed.to_string());
        line("dtype", self.dtype.name().to_string());
        out
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped,
    /// unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ClaRetConfig::default();
        for (key, value) in kv_lines(text)? {
            if !cfg.set(key, value)? {
                return Err(Error::config(key, "unknown key"));
            }
        }
        Ok(cfg)
    }
}

/// Splits `key=value` text into trimmed pairs.
pub fn kv_lines(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}", n + 1), "expected key=value"));
        };
        out.push((k.trim(), v.trim()));
    }
    Ok(out)
}
