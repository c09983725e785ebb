use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use bnf_core::data::FixedDataset;
use bnf_core::layers::AxisPolicy;
use bnf_core::model::{preset, FirstLayerMode, ModelConfig, NetworkOptions, Preset};
use bnf_core::train::{save_checkpoint, train, write_metrics_csv, TrainConfig};
use bnf_core::Execution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::{Axis, DataArgs, TrainArgs};
use crate::data::{self, Source};
use crate::paths::under_root;
use crate::usage;

/// Synthetic validation data is drawn with this offset added to the seed.
pub const VAL_SEED_OFFSET: u64 = 1_000_003;

#[derive(Serialize, Deserialize, Debug)]
pub struct DataSnapshot {
    pub source: String,
    pub samples_per_class: usize,
    pub csv_config: Option<PathBuf>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub bits: u8,
    pub channel_ranges: Option<Vec<(f64, f64)>>,
    pub val_subject: Option<u32>,
    pub val_fraction: f64,
    pub train_samples: usize,
    pub val_samples: usize,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct RunManifest {
    pub version: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub model: ModelConfig,
    pub options: NetworkOptions,
    pub train: TrainConfig,
    pub data: DataSnapshot,
    pub metrics: String,
    pub checkpoint_dir: String,
    pub checkpoint_files: Vec<String>,
    pub final_val_error: Option<f64>,
    pub best_val_error: Option<(usize, f64)>,
    pub wall_clock_secs: f64,
}

pub fn parse_mode(mode: &str, k: Option<usize>) -> Result<FirstLayerMode> {
    let mode: FirstLayerMode = mode.parse().map_err(|e: bnf_core::Error| usage(e.to_string()))?;
    match (mode, k) {
        (FirstLayerMode::Bil, None) => Err(usage("K required for bil")),
        (FirstLayerMode::Bil, Some(0)) => Err(usage("--K must be positive")),
        (m, Some(_)) if m != FirstLayerMode::Bil => Err(usage("--K only applies to --mode bil")),
        (m, _) => Ok(m),
    }
}

fn split_validation(ds: &FixedDataset, a: &TrainArgs) -> Result<(FixedDataset, Option<FixedDataset>)> {
    let (train_idx, val_idx): (Vec<usize>, Vec<usize>) = if let Some(s) = a.val_subject {
        let (v, t): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.subjects()[i] == s);
        if v.is_empty() {
            return Err(usage(format!("no samples for --val-subject {s}")));
        }
        (t, v)
    } else {
        if !(0.0..1.0).contains(&a.val_fraction) {
            return Err(usage("--val-fraction must be in [0, 1)"));
        }
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
        let n_val = (ds.len() as f64 * a.val_fraction).round() as usize;
        let val = idx.split_off(ds.len() - n_val);
        idx.sort_unstable();
        let mut val = val;
        val.sort_unstable();
        (idx, val)
    };
    let val = (!val_idx.is_empty()).then(|| ds.subset(&val_idx));
    Ok((ds.subset(&train_idx), val))
}

fn model_config(a: &TrainArgs, mode: FirstLayerMode, ds: &FixedDataset) -> Result<ModelConfig> {
    let mut cfg = match (&a.preset, &a.arch) {
        (Some(p), _) => preset(p.parse::<Preset>().map_err(|e| usage(e.to_string()))?),
        (None, Some(arch)) => {
            let axis = match a.axis {
                Axis::Full2d => AxisPolicy::Full2d,
                Axis::TimeOnly => AxisPolicy::TimeOnly,
            };
            let classes = a.classes.unwrap_or(ds.num_classes());
            ModelConfig::from_architecture(arch, ds.shape().clone(), axis, classes).map_err(|e| usage(e.to_string()))?
        }
        (None, None) => return Err(usage("one of --preset or --arch is required")),
    };
    cfg.bits = ds.bits();
    if let Some(d) = a.dropout {
        cfg.dropout = d;
    }
    cfg.with_mode(mode, a.k).map_err(|e| usage(e.to_string()))
}

fn input_shape_hint(a: &TrainArgs) -> Result<Option<bnf_core::bitplane::Shape>> {
    if let Some(p) = &a.preset {
        let p: Preset = p.parse().map_err(|e: bnf_core::Error| usage(e.to_string()))?;
        return Ok(Some(preset(p).input_shape));
    }
    a.input_shape.as_deref().map(data::parse_shape).transpose()
}

pub fn run(a: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let mode = parse_mode(&a.mode, a.k)?;
    if a.epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }
    let source = Source::parse(&a.data.data)?;
    let shape = input_shape_hint(&a)?;
    let classes_hint = if a.preset.is_some() { None } else { a.classes };
    let loaded = data::load(&a.data, shape.as_ref(), classes_hint, a.seed, None)?;

    let (train_set, val_set) = if let Source::Synth(_) = source {
        let val_args = DataArgs { ..a.data.clone() };
        let val = data::load(&val_args, shape.as_ref(), classes_hint, a.seed.wrapping_add(VAL_SEED_OFFSET), None)?;
        (loaded.dataset, Some(val.dataset))
    } else {
        split_validation(&loaded.dataset, &a)?
    };
    let model = model_config(&a, mode, &train_set)?;
    let options = if a.float_path { NetworkOptions::float_path() } else { NetworkOptions::default() };
    let tc = TrainConfig {
        epochs: a.epochs,
        initial_lr: a.lr.unwrap_or_else(|| a.preset.as_deref().and_then(|p| p.parse::<Preset>().ok()).map_or(1e-3, Preset::initial_lr)),
        lr_schedule: a.lr_drops.iter().map(|&e| (e, 0.1)).collect(),
        batch_size: a.batch_size,
        seed: a.seed,
        execution: if a.sequential { Execution::Sequential } else { Execution::default() },
        ..TrainConfig::default()
    };
    tc.validate().map_err(|e| usage(e.to_string()))?;

    let run_name = a.run_name.clone().unwrap_or_else(|| format!("{}-seed{}", mode.name(), a.seed));
    let run_dir = under_root(run_name.as_ref())?;
    fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    log::info!(
        "training {} ({} train, {} validation samples) into {}",
        mode,
        train_set.len(),
        val_set.as_ref().map_or(0, FixedDataset::len),
        run_dir.display()
    );

    let out = train(&model, options, &train_set, val_set.as_ref(), &tc)?;
    write_metrics_csv(run_dir.join("metrics.csv"), &out.metrics)?;
    let files = save_checkpoint(&out.network, run_dir.join("checkpoint"))?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        argv: std::env::args().collect(),
        seed: a.seed,
        model,
        options,
        train: tc,
        data: DataSnapshot {
            source: a.data.data.clone(),
            samples_per_class: a.data.samples_per_class,
            csv_config: a.data.csv_config.clone(),
            window: a.data.window,
            stride: a.data.stride,
            bits: train_set.bits(),
            channel_ranges: loaded.channel_ranges,
            val_subject: a.val_subject,
            val_fraction: a.val_fraction,
            train_samples: train_set.len(),
            val_samples: val_set.as_ref().map_or(0, FixedDataset::len),
        },
        metrics: "metrics.csv".into(),
        checkpoint_dir: "checkpoint".into(),
        checkpoint_files: files,
        final_val_error: out.final_val_error,
        best_val_error: out.best_val_error,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    fs::write(run_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    match (out.final_val_error, out.best_val_error) {
        (Some(f), Some((epoch, b))) => {
            println!("final validation error: {f:.2}%");
            println!("best validation error: {b:.2}% (epoch {epoch})");
        }
        _ => println!("no validation set; final train error: {:.2}%", out.metrics.last().map_or(f64::NAN, |m| m.error_pct)),
    }
    println!("run directory: {}", run_dir.display());
    Ok(())
}
