//! Architecture description, presets and the trainable network built from them.

mod config;
mod dsl;
mod network;

pub use config::{preset, FirstLayerMode, ModelConfig, Preset, StageShape, PAMAP2_LITERAL};
pub use dsl::{parse_architecture, render, LayerSpec};
pub use network::{Network, NetworkOptions, ParamEntry, ParamKind, StepResult};
