use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    Whitespace,
}

/// A column by zero-based position or by header name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

/// Column mapping for a sensor CSV, usually read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvConfig {
    #[serde(default)]
    pub delimiter: Delimiter,
    #[serde(default)]
    pub has_header: bool,
    /// Columns that become input channels, in order.
    pub columns: Vec<ColumnRef>,
    pub label_column: ColumnRef,
    #[serde(default)]
    pub subject_column: Option<ColumnRef>,
    /// Subject id used when there is no subject column.
    #[serde(default)]
    pub default_subject: u32,
    /// Raw label → class id. Rows whose label is not a key are skipped.
    #[serde(default)]
    pub label_map: Option<BTreeMap<String, usize>>,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
}

fn default_rate() -> f64 {
    100.0
}

impl CsvConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Row-major sensor rows after column selection.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub channels: usize,
    /// `rows × channels` values.
    pub values: Vec<f64>,
    pub labels: Vec<usize>,
    pub subjects: Vec<u32>,
    pub sample_rate_hz: f64,
    /// Rows dropped for missing or unparsable values in selected columns.
    pub dropped: usize,
    /// Rows skipped because their label is not in the label map.
    pub unmapped: usize,
}

impl RawSeries {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }
}

fn resolve(col: &ColumnRef, header: Option<&[String]>, what: &str) -> Result<usize> {
    match (col, header) {
        (ColumnRef::Index(i), _) => Ok(*i),
        (ColumnRef::Name(n), Some(h)) => h
            .iter()
            .position(|c| c.trim() == n)
            .ok_or_else(|| invalid!("{what} column {n:?} not found in header")),
        (ColumnRef::Name(n), None) => Err(invalid!("{what} column {n:?} named but the file has no header")),
    }
}

fn parse_cell(s: Option<&str>) -> Option<f64> {
    let v: f64 = s?.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn load_timeseries_csv(path: impl AsRef<Path>, cfg: &CsvConfig) -> Result<RawSeries> {
    if cfg.columns.is_empty() {
        return Err(invalid!("no channel columns mapped"));
    }
    let text = fs::read_to_string(path.as_ref())?;
    let mut records: Vec<Vec<String>> = Vec::new();
    match cfg.delimiter {
        Delimiter::Comma => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_reader(text.as_bytes());
            for rec in rdr.records() {
                records.push(rec?.iter().map(str::to_string).collect());
            }
        }
        Delimiter::Whitespace => {
            records.extend(
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.split_whitespace().map(str::to_string).collect()),
            );
        }
    }
    let header = if cfg.has_header && !records.is_empty() {
        Some(records.remove(0))
    } else {
        None
    };
    let hdr = header.as_deref();
    let chans = cfg
        .columns
        .iter()
        .map(|c| resolve(c, hdr, "channel"))
        .collect::<Result<Vec<_>>>()?;
    let label_col = resolve(&cfg.label_column, hdr, "label")?;
    let subject_col = cfg.subject_column.as_ref().map(|c| resolve(c, hdr, "subject")).transpose()?;
    let width = records.iter().map(Vec::len).max().unwrap_or(0);
    if label_col >= width {
        return Err(invalid!("label column {label_col} is beyond the {width} columns in the file"));
    }
    if let Some(&c) = chans.iter().find(|&&c| c >= width) {
        return Err(invalid!("channel column {c} is beyond the {width} columns in the file"));
    }

    let mut out = RawSeries {
        channels: chans.len(),
        values: Vec::new(),
        labels: Vec::new(),
        subjects: Vec::new(),
        sample_rate_hz: cfg.sample_rate_hz,
        dropped: 0,
        unmapped: 0,
    };
    let mut row_vals = Vec::with_capacity(chans.len());
    for rec in &records {
        let cell = |i: usize| rec.get(i).map(String::as_str);
        row_vals.clear();
        row_vals.extend(chans.iter().map(|&c| parse_cell(cell(c))));
        let label = parse_cell(cell(label_col));
        let subject = match subject_col {
            Some(c) => parse_cell(cell(c)),
            None => Some(cfg.default_subject as f64),
        };
        let (Some(label), Some(subject)) = (label, subject) else {
            out.dropped += 1;
            continue;
        };
        if row_vals.iter().any(Option::is_none) || label < 0.0 || label.fract() != 0.0 || subject < 0.0 {
            out.dropped += 1;
            continue;
        }
        let class = match &cfg.label_map {
            Some(m) => match m.get(&(label as u64).to_string()) {
                Some(&c) => c,
                None => {
                    out.unmapped += 1;
                    continue;
                }
            },
            None => label as usize,
        };
        out.values.extend(row_vals.iter().map(|v| v.unwrap()));
        out.labels.push(class);
        out.subjects.push(subject as u32);
    }
    if out.labels.is_empty() {
        return Err(invalid!(
            "no usable rows in {} ({} dropped, {} unmapped)",
            path.as_ref().display(),
            out.dropped,
            out.unmapped
        ));
    }
    if out.dropped > 0 {
        log::info!("{}: dropped {} rows with missing values", path.as_ref().display(), out.dropped);
    }
    Ok(out)
}
