use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bnf_core::bitplane::{Container, Shape};
use bnf_core::data::{generate_synthetic, load_timeseries_csv, window, CsvConfig, FixedDataset, RawSeries, SynthKind, SynthSpec};

use crate::args::DataArgs;
use crate::usage;

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synth(SynthKind),
    /// One or more files; without a subject column each file is its own subject.
    Csv(Vec<PathBuf>),
    Bnt { inputs: PathBuf, labels: PathBuf, subjects: Option<PathBuf> },
}

impl Source {
    pub fn parse(s: &str) -> Result<Self> {
        let (scheme, rest) = s.split_once(':').ok_or_else(|| usage(format!("--data {s:?} needs a synth:, csv: or bnt: prefix")))?;
        match scheme {
            "synth" => Ok(Source::Synth(rest.parse().map_err(|e| usage(format!("{e}")))?)),
            "csv" if !rest.split(',').any(str::is_empty) => Ok(Source::Csv(rest.split(',').map(PathBuf::from).collect())),
            "bnt" => {
                let parts: Vec<&str> = rest.split(',').collect();
                match parts[..] {
                    [x, y] => Ok(Source::Bnt { inputs: x.into(), labels: y.into(), subjects: None }),
                    [x, y, s] => Ok(Source::Bnt { inputs: x.into(), labels: y.into(), subjects: Some(s.into()) }),
                    _ => Err(usage("bnt: expects inputs.bnt,labels.bnt[,subjects.bnt]")),
                }
            }
            _ => Err(usage(format!("unknown data source {s:?}"))),
        }
    }
}

/// A loaded dataset plus what is needed to encode more data the same way.
pub struct Loaded {
    pub dataset: FixedDataset,
    /// Per-channel scaling used for CSV data.
    pub channel_ranges: Option<Vec<(f64, f64)>>,
}

/// Loads `args.data`. `shape` is the model input, needed for synthetic
/// data and as the default CSV window; `ranges` reuses a training run's
/// scaling.
pub fn load(args: &DataArgs, shape: Option<&Shape>, classes: Option<usize>, seed: u64, ranges: Option<&[(f64, f64)]>) -> Result<Loaded> {
    match Source::parse(&args.data)? {
        Source::Synth(kind) => {
            let shape = shape.ok_or_else(|| usage("synthetic data needs a model input shape (--preset or --input-shape)"))?;
            let spec = SynthSpec::new(kind, shape.clone(), args.m, args.samples_per_class, seed);
            Ok(Loaded { dataset: generate_synthetic(&spec)?, channel_ranges: None })
        }
        Source::Csv(paths) => {
            let cfg_path = args.csv_config.as_ref().ok_or_else(|| usage("csv: data needs --csv-config"))?;
            let cfg = CsvConfig::from_json_file(cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
            let series = load_all(&paths, &cfg)?;
            let len = match (args.window, shape) {
                (Some(l), _) => l,
                (None, Some(s)) if s.rank() == 3 => s.dims()[1],
                _ => return Err(usage("csv: data needs --window when the model width is unknown")),
            };
            let ts = window(&series, len, args.stride.unwrap_or(len))?;
            let ranges = match ranges {
                Some(r) => r.to_vec(),
                None => ts.channel_ranges(),
            };
            let classes = classes
                .or_else(|| cfg.label_map.as_ref().and_then(|m| m.values().max()).map(|&m| m + 1))
                .or_else(|| ts.labels.iter().max().map(|&m| m + 1))
                .unwrap_or(1);
            let dataset = ts.to_fixed(&ranges, args.m, classes)?;
            Ok(Loaded { dataset, channel_ranges: Some(ranges) })
        }
        Source::Bnt { inputs, labels, subjects } => {
            let read = |p: &Path| Container::read(p).with_context(|| format!("reading {}", p.display()));
            let s = subjects.as_deref().map(read).transpose()?;
            let dataset = FixedDataset::from_containers(&read(&inputs)?, &read(&labels)?, s.as_ref(), classes)?;
            if dataset.bits() != args.m {
                log::warn!("{} holds {}-bit values; --M {} ignored", inputs.display(), dataset.bits(), args.m);
            }
            Ok(Loaded { dataset, channel_ranges: None })
        }
    }
}

fn load_all(paths: &[PathBuf], cfg: &CsvConfig) -> Result<RawSeries> {
    let mut all: Option<RawSeries> = None;
    for (i, path) in paths.iter().enumerate() {
        let mut s = load_timeseries_csv(path, cfg).with_context(|| format!("reading {}", path.display()))?;
        if s.dropped > 0 || s.unmapped > 0 {
            log::info!("{}: dropped {} rows with missing values, {} with unmapped labels", path.display(), s.dropped, s.unmapped);
        }
        if cfg.subject_column.is_none() {
            s.subjects.fill(cfg.default_subject + i as u32);
        }
        match &mut all {
            None => all = Some(s),
            Some(a) => {
                a.values.extend(s.values);
                a.labels.extend(s.labels);
                a.subjects.extend(s.subjects);
                a.dropped += s.dropped;
                a.unmapped += s.unmapped;
            }
        }
    }
    all.ok_or_else(|| usage("csv: needs at least one file"))
}

/// Parses `HxWxC`.
pub fn parse_shape(s: &str) -> Result<Shape> {
    let dims: Vec<usize> = s
        .split(['x', 'X', '×'])
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("bad shape {s:?}, expected HxWxC")))?;
    if dims.len() != 3 {
        return Err(usage(format!("bad shape {s:?}, expected HxWxC")));
    }
    Shape::new(&dims).map_err(|e| usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources() {
        assert_eq!(Source::parse("synth:bit_parity").unwrap(), Source::Synth(SynthKind::BitParity));
        assert_eq!(Source::parse("csv:a.csv").unwrap(), Source::Csv(vec!["a.csv".into()]));
        assert_eq!(Source::parse("csv:a,b").unwrap(), Source::Csv(vec!["a".into(), "b".into()]));
        assert!(matches!(Source::parse("bnt:x,y,s").unwrap(), Source::Bnt { subjects: Some(_), .. }));
        for bad in ["synth:nope", "csv:", "csv:a,", "bnt:x", "x.csv", "foo:bar"] {
            assert!(Source::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn shapes() {
        assert_eq!(parse_shape("7x100x1").unwrap().dims(), &[7, 100, 1]);
        assert!(parse_shape("7x100").is_err());
        assert!(parse_shape("7x0x1").is_err());
    }
}
