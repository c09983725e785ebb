use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bnf", version, about = "Binary first-layer strategies for binarized CNNs")]
pub struct Cli {
    /// Only print warnings and errors on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a network and write metrics, checkpoint and manifest.
    Train(Box<TrainArgs>),
    /// Classification error of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// First-layer multiplication, weight and area estimates.
    Cost(CostArgs),
    /// Split a fixed-point tensor file into bit planes.
    Decompose(DecomposeArgs),
}

/// Where samples come from and how raw series become fixed-point windows.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// `synth:<bit_separable|bit_parity|linear>`, `csv:<file>` or
    /// `bnt:<inputs.bnt>,<labels.bnt>[,<subjects.bnt>]`.
    #[arg(long)]
    pub data: String,
    /// Samples per class for synthetic data.
    #[arg(long, default_value_t = 64)]
    pub samples_per_class: usize,
    /// JSON column description for `csv:` data.
    #[arg(long)]
    pub csv_config: Option<PathBuf>,
    /// Window length in rows for `csv:` data; defaults to the model input width.
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride in rows; defaults to the window length.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Input bit width `M`.
    #[arg(long = "M", default_value_t = 8)]
    pub m: u8,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Axis {
    Full2d,
    TimeOnly,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Named architecture: pamap2, svhn or cifar10.
    #[arg(long, conflicts_with = "arch", required_unless_present = "arch")]
    pub preset: Option<String>,
    /// Architecture string such as `24-C3+MP2+FC64+Softmax`.
    #[arg(long)]
    pub arch: Option<String>,
    /// Kernel layout for `--arch` models.
    #[arg(long, value_enum, default_value_t = Axis::TimeOnly)]
    pub axis: Axis,
    /// Input `HxWxC` for synthetic data with `--arch`.
    #[arg(long)]
    pub input_shape: Option<String>,
    /// Number of classes for `--arch` models; defaults to the data's.
    #[arg(long)]
    pub classes: Option<usize>,
    /// First-layer strategy: baseline, fpid, dbi or bil.
    #[arg(long, default_value = "baseline")]
    pub mode: String,
    /// BIL filter count `K`.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial learning rate; defaults to the preset's, else 1e-3.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs after which the learning rate is multiplied by 0.1.
    #[arg(long, value_delimiter = ',', default_value = "100,150")]
    pub lr_drops: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Dropout rate before the first dense layer.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Hold out this subject for validation (non-synthetic data).
    #[arg(long)]
    pub val_subject: Option<u32>,
    /// Fraction held out for validation when no subject is given.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Train without weight binarization or activation quantization.
    #[arg(long)]
    pub float_path: bool,
    /// Run directory name under the output root.
    #[arg(long)]
    pub run_name: Option<String>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long = "H")]
    pub h: Option<u64>,
    #[arg(long = "W")]
    pub w: Option<u64>,
    #[arg(long = "C")]
    pub c: Option<u64>,
    /// Kernel elements per input channel.
    #[arg(long = "F")]
    pub f: Option<u64>,
    /// First-layer output filters.
    #[arg(long = "I")]
    pub i: Option<u64>,
    #[arg(long = "M", default_value_t = 8)]
    pub m: u64,
    #[arg(long = "K")]
    pub k: Option<u64>,
    /// Gates per float multiplication.
    #[arg(long, default_value_t = 3820.0)]
    pub float_gates: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    /// Fixed-point tensor container.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file, relative to the output root.
    #[arg(long)]
    pub output: PathBuf,
    /// Expected bit width; must match the file.
    #[arg(long = "M")]
    pub m: Option<u8>,
    /// Recompose the planes and compare with the input.
    #[arg(long)]
    pub roundtrip: bool,
}
