use std::fs;

use anyhow::{bail, Context, Result};
use bnf_core::train::load_checkpoint;
use bnf_core::Execution;

use super::train::RunManifest;
use crate::args::EvalArgs;
use crate::data;

pub fn run(a: EvalArgs) -> Result<()> {
    let net = load_checkpoint(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    // CSV data is scaled like the training run when its manifest is next door.
    let manifest: Option<RunManifest> = a
        .checkpoint
        .parent()
        .map(|p| p.join("manifest.json"))
        .filter(|p| p.is_file())
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str(&s).ok());
    let ranges = manifest.as_ref().and_then(|m| m.data.channel_ranges.clone());
    let cfg = net.config();
    let loaded = data::load(&a.data, Some(&cfg.input_shape), Some(cfg.num_classes), a.seed, ranges.as_deref())?;
    let ds = loaded.dataset;
    if ds.is_empty() {
        bail!("evaluation set is empty");
    }
    let (err, loss) = net.evaluate(Execution::default(), &ds, 256)?;
    println!("error: {err:.2}% ({} samples, loss {loss:.4})", ds.len());
    Ok(())
}
