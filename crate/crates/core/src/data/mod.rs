//! Datasets: fixed-point sample sets, sensor CSV ingestion, windowing and
//! synthetic generators.

mod csv_load;
mod dataset;
mod synth;
mod window;

pub use csv_load::{load_timeseries_csv, ColumnRef, CsvConfig, Delimiter, RawSeries};
pub use dataset::FixedDataset;
pub use synth::{generate_synthetic, SynthKind, SynthSpec};
pub use window::{window, TimeSeriesDataset};
