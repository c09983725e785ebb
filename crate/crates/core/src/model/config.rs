use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dsl::{parse_architecture, LayerSpec};
use crate::bitplane::{Shape, MAX_BITS};
use crate::layers::AxisPolicy;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstLayerMode {
    /// Normalized float inputs, full-precision first-layer weights.
    Baseline,
    /// Fixed-point inputs, one binary weight per tap.
    Fpid,
    /// Bit-plane inputs, one binary weight per bit.
    Dbi,
    /// Bit-plane inputs through an extra 1×1 binary layer.
    Bil,
}

impl FirstLayerMode {
    pub const ALL: [FirstLayerMode; 4] = [Self::Baseline, Self::Fpid, Self::Dbi, Self::Bil];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Fpid => "fpid",
            Self::Dbi => "dbi",
            Self::Bil => "bil",
        }
    }

    /// True if the network sees bit planes rather than integer values.
    pub fn uses_bit_planes(self) -> bool {
        matches!(self, Self::Dbi | Self::Bil)
    }
}

impl fmt::Display for FirstLayerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FirstLayerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown first-layer mode {s:?} (baseline, fpid, dbi, bil)")))
    }
}

/// The PAMAP2 architecture as printed, including its `64-C64` token.
pub const PAMAP2_LITERAL: &str = "24-C3+MP2+32-C3+MP2+64-C64+MP2+FC256+Softmax";
const PAMAP2_ARCH: &str = "24-C3+MP2+32-C3+MP2+64-C3+MP2+FC256+Softmax";
const SVHN_ARCH: &str = "48-C5+MP2-2x(64-C3)-MP2-3x(128-C3)-FC512-Softmax";
const CIFAR10_ARCH: &str = "2x(128-C3)+MP2+2x(256-C3)+MP2+2x(512-C3)+MP2+1024-FC+Softmax";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Pamap2,
    Svhn,
    Cifar10,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Pamap2, Preset::Svhn, Preset::Cifar10];

    /// Architecture string as written in the literature.
    pub fn literal_architecture(self) -> &'static str {
        match self {
            Preset::Pamap2 => PAMAP2_LITERAL,
            Preset::Svhn => SVHN_ARCH,
            Preset::Cifar10 => CIFAR10_ARCH,
        }
    }

    pub fn initial_lr(self) -> f64 {
        match self {
            Preset::Pamap2 => 1e-4,
            Preset::Svhn | Preset::Cifar10 => 1e-3,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pamap2" => Ok(Preset::Pamap2),
            "svhn" => Ok(Preset::Svhn),
            "cifar10" | "cifar-10" | "cifar" => Ok(Preset::Cifar10),
            _ => Err(Error::Config(format!("unknown preset {s:?} (pamap2, svhn, cifar10)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    pub first_layer_mode: FirstLayerMode,
    /// `K`, only for [`FirstLayerMode::Bil`].
    pub bil_filters: Option<usize>,
    /// `M`, the input bit width.
    pub bits: u8,
    pub input_shape: Shape,
    pub axis_policy: AxisPolicy,
    pub num_classes: usize,
    /// Dropout rate in front of the first dense layer.
    pub dropout: f64,
}

/// Activation shape after one layer (batch dimension excluded).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl StageShape {
    pub fn numel(&self) -> usize {
        self.h * self.w * self.c
    }
}

pub fn preset(name: Preset) -> ModelConfig {
    let (arch, shape, policy) = match name {
        Preset::Pamap2 => {
            static NOTE: std::sync::Once = std::sync::Once::new();
            NOTE.call_once(|| log::warn!("PAMAP2 architecture token 64-C64 read as 64-C3 (1×3 kernel like the other layers)"));
            (PAMAP2_ARCH, [7, 100, 1], AxisPolicy::TimeOnly)
        }
        Preset::Svhn => (SVHN_ARCH, [40, 40, 3], AxisPolicy::Full2d),
        Preset::Cifar10 => (CIFAR10_ARCH, [32, 32, 3], AxisPolicy::Full2d),
    };
    ModelConfig {
        layers: parse_architecture(arch).expect("preset strings parse"),
        first_layer_mode: FirstLayerMode::Baseline,
        bil_filters: None,
        bits: 8,
        input_shape: Shape::new(&shape).expect("preset shape"),
        axis_policy: policy,
        num_classes: if name == Preset::Pamap2 { 7 } else { 10 },
        dropout: 0.5,
    }
}

impl ModelConfig {
    pub fn from_architecture(arch: &str, input_shape: Shape, axis_policy: AxisPolicy, num_classes: usize) -> Result<Self> {
        Ok(ModelConfig {
            layers: parse_architecture(arch)?,
            first_layer_mode: FirstLayerMode::Baseline,
            bil_filters: None,
            bits: 8,
            input_shape,
            axis_policy,
            num_classes,
            dropout: 0.5,
        })
    }

    /// Sets the first-layer strategy; `k` is required for BIL and must be
    /// absent otherwise.
    pub fn with_mode(mut self, mode: FirstLayerMode, k: Option<usize>) -> Result<Self> {
        self.first_layer_mode = mode;
        self.bil_filters = k;
        self.validate()?;
        Ok(self)
    }

    /// `n`, the number of convolutional layers.
    pub fn conv_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count()
    }

    /// Convolutional plus dense layers (the classifier head not counted).
    pub fn weighted_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. } | LayerSpec::Dense { .. }))
            .count()
    }

    /// Channels entering the first convolution under the current mode.
    pub fn first_layer_input_channels(&self) -> usize {
        let c = self.input_shape.channels();
        match self.first_layer_mode {
            FirstLayerMode::Baseline | FirstLayerMode::Fpid => c,
            FirstLayerMode::Dbi => c * self.bits as usize,
            FirstLayerMode::Bil => self.bil_filters.unwrap_or(0),
        }
    }

    /// Checks all invariants and returns the activation shape after each layer.
    pub fn validate(&self) -> Result<Vec<StageShape>> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(1..=MAX_BITS).contains(&self.bits) {
            return cfg(format!("bit width M must be 1..={MAX_BITS}, got {}", self.bits));
        }
        match (self.first_layer_mode, self.bil_filters) {
            (FirstLayerMode::Bil, None) => return cfg("K required for bil".into()),
            (FirstLayerMode::Bil, Some(0)) => return cfg("K must be at least 1".into()),
            (m, Some(_)) if m != FirstLayerMode::Bil => return cfg(format!("K only applies to bil, not {m}")),
            _ => {}
        }
        if self.num_classes < 2 {
            return cfg(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return cfg(format!("dropout rate must be in [0, 1), got {}", self.dropout));
        }
        let softmax = self.layers.iter().filter(|l| **l == LayerSpec::Softmax).count();
        if softmax != 1 || self.layers.last() != Some(&LayerSpec::Softmax) {
            return cfg("exactly one Softmax head, at the end, is required".into());
        }
        if !matches!(self.layers.first(), Some(LayerSpec::Conv { .. })) {
            return cfg("the first layer must be a convolution".into());
        }
        let &[h, w, c] = self.input_shape.dims() else {
            return cfg(format!("input shape must be H×W×C, got {:?}", self.input_shape.dims()));
        };
        let mut s = StageShape { h, w, c };
        let mut flat = false;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            match *l {
                LayerSpec::Conv { filters, .. } => {
                    if flat {
                        return cfg(format!("layer {i}: convolution after a dense layer"));
                    }
                    s.c = filters;
                }
                LayerSpec::MaxPool { window } => {
                    if flat {
                        return cfg(format!("layer {i}: pooling after a dense layer"));
                    }
                    let (ph, pw) = self.axis_policy.window(window);
                    if ph > s.h || pw > s.w {
                        return cfg(format!("layer {i}: pool window {ph}×{pw} larger than {}×{}", s.h, s.w));
                    }
                    s.h /= ph;
                    s.w /= pw;
                }
                LayerSpec::Dense { units } => {
                    flat = true;
                    s = StageShape { h: 1, w: 1, c: units };
                }
                LayerSpec::Softmax => {
                    s = StageShape { h: 1, w: 1, c: self.num_classes };
                }
            }
            out.push(s);
        }
        Ok(out)
    }
}
