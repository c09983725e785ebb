use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::EpochMetrics;
use crate::bitplane::Container;
use crate::error::shape_err;
use crate::model::{ModelConfig, Network, NetworkOptions, ParamKind};
use crate::tensor::Tensor;
use crate::{Error, Result};

const MANIFEST: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    kind: ParamKind,
    shape: Vec<usize>,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct BnRecord {
    mean: String,
    var: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    config: ModelConfig,
    options: NetworkOptions,
    params: Vec<ParamRecord>,
    batch_norm: Vec<BnRecord>,
}

/// Writes `manifest.json` plus one 32-bit container per parameter and per
/// batch-norm running statistic into `dir`. Returns the files written.
pub fn save_checkpoint(net: &Network, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |file: String, t: &Tensor| -> Result<String> {
        Container::real(t)?.write(dir.join(&file))?;
        files.push(file.clone());
        Ok(file)
    };
    let mut params = Vec::new();
    for p in net.params() {
        params.push(ParamRecord {
            name: p.name.clone(),
            kind: p.kind,
            shape: p.value.shape().to_vec(),
            file: put(format!("{}.bnt", p.name), &p.value)?,
        });
    }
    let mut batch_norm = Vec::new();
    for (i, bn) in net.batch_norm_states().iter().enumerate() {
        let c = bn.channels();
        batch_norm.push(BnRecord {
            mean: put(format!("bn{i}.running_mean.bnt"), &Tensor::from_vec(&[c], bn.running_mean.clone())?)?,
            var: put(format!("bn{i}.running_var.bnt"), &Tensor::from_vec(&[c], bn.running_var.clone())?)?,
        });
    }
    let manifest = CheckpointManifest {
        config: net.config().clone(),
        options: net.options(),
        params,
        batch_norm,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    files.push(MANIFEST.into());
    Ok(files)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Network> {
    let dir = dir.as_ref();
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let mut net = Network::new(&manifest.config, manifest.options, 0)?;
    if manifest.params.len() != net.params().len() || manifest.batch_norm.len() != net.batch_norm_states().len() {
        return Err(Error::Format("checkpoint does not match the network its config builds".into()));
    }
    for (rec, p) in manifest.params.iter().zip(net.params_mut()) {
        let t = Container::read(dir.join(&rec.file))?.to_tensor();
        if rec.name != p.name || t.shape() != p.value.shape() {
            return Err(shape_err!("checkpoint parameter {} does not match {} {:?}", rec.name, p.name, p.value.shape()));
        }
        p.value = t;
    }
    for (i, rec) in manifest.batch_norm.iter().enumerate() {
        let mean = Container::read(dir.join(&rec.mean))?.to_tensor().into_vec();
        let var = Container::read(dir.join(&rec.var))?.to_tensor().into_vec();
        net.set_running_stats(i, mean, var)?;
    }
    Ok(net)
}

pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
