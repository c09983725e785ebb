use crate::bitplane::{to_fixed_point, Shape};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

use super::{FixedDataset, RawSeries};

/// Fixed-length windows shaped `channels × length × 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub channels: usize,
    pub length: usize,
    /// `N × channels × length`, channel-major within a window.
    pub values: Vec<f64>,
    pub labels: Vec<usize>,
    pub subjects: Vec<u32>,
    pub sample_rate_hz: f64,
}

impl TimeSeriesDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_values(&self, i: usize) -> &[f64] {
        let per = self.channels * self.length;
        &self.values[i * per..(i + 1) * per]
    }

    /// Per-channel `(min, max)` over all windows. A constant channel gets a
    /// unit-wide range so that it maps to zero.
    pub fn channel_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.channels)
            .map(|c| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for i in 0..self.len() {
                    for &v in &self.window_values(i)[c * self.length..(c + 1) * self.length] {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                if hi <= lo {
                    hi = lo + 1.0;
                }
                (lo, hi)
            })
            .collect()
    }

    /// Maps every channel onto `bits`-bit fixed point using its own range.
    pub fn to_fixed(&self, ranges: &[(f64, f64)], bits: u8, num_classes: usize) -> Result<FixedDataset> {
        if ranges.len() != self.channels {
            return Err(invalid!("{} ranges given for {} channels", ranges.len(), self.channels));
        }
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.len() {
            let w = self.window_values(i);
            for (c, &(lo, hi)) in ranges.iter().enumerate() {
                let row = Tensor::from_vec(&[self.length], w[c * self.length..(c + 1) * self.length].to_vec())?;
                values.extend(to_fixed_point(&row, lo, hi, bits)?.into_values());
            }
        }
        FixedDataset::new(
            Shape::hwc(self.channels, self.length, 1)?,
            bits,
            values,
            self.labels.clone(),
            self.subjects.clone(),
            num_classes,
        )
    }
}

/// Cuts each contiguous single-subject run into windows of `length` rows,
/// starting every `stride` rows. A window takes its majority label, ties
/// going to the smallest label.
pub fn window(series: &RawSeries, length: usize, stride: usize) -> Result<TimeSeriesDataset> {
    if length == 0 || stride == 0 {
        return Err(invalid!("window length and stride must be positive"));
    }
    let c = series.channels;
    let mut out = TimeSeriesDataset {
        channels: c,
        length,
        values: Vec::new(),
        labels: Vec::new(),
        subjects: Vec::new(),
        sample_rate_hz: series.sample_rate_hz,
    };
    let n = series.rows();
    let mut start = 0;
    while start < n {
        let subject = series.subjects[start];
        let mut end = start;
        while end < n && series.subjects[end] == subject {
            end += 1;
        }
        let mut s = start;
        while s + length <= end {
            for ch in 0..c {
                out.values.extend((s..s + length).map(|t| series.values[t * c + ch]));
            }
            out.labels.push(majority(&series.labels[s..s + length]));
            out.subjects.push(subject);
            s += stride;
        }
        start = end;
    }
    if out.is_empty() {
        log::warn!("no run is long enough for windows of {length} rows");
    }
    Ok(out)
}

fn majority(labels: &[usize]) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    // BTreeMap iterates in ascending label order, so max_by keeps the last
    // maximum; reverse to prefer the smallest label.
    counts
        .into_iter()
        .rev()
        .max_by_key(|&(_, n)| n)
        .map(|(l, _)| l)
        .unwrap_or(0)
}
