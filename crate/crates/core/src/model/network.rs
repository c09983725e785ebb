//! Trainable network assembled from a [`ModelConfig`].
//!
//! Every convolution and hidden dense layer is followed by batch norm and
//! the bounded, quantized activation. Weights are binarized on the fly from
//! full-precision latent copies; the classifier head stays full precision,
//! as does the first convolution in baseline mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{FirstLayerMode, ModelConfig};
use super::dsl::LayerSpec;
use crate::autodiff::{Tape, Var};
use crate::bitplane::max_value;
use crate::data::FixedDataset;
use crate::error::{shape_err, Result};
use crate::layers::{self, BatchNormCache, BatchNormParams, ConvSpec, BN_EPS};
use crate::par::Execution;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Latent weights whose binarized view enters the forward pass.
    Binary,
    /// Used as is (first layer in baseline mode, classifier, batch norm).
    Float,
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub kind: ParamKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkOptions {
    /// With `false`, weights are never binarized and activations are only
    /// clamped: the fully differentiable float path.
    pub quantize: bool,
    pub activation_bits: u32,
    pub ste_clip: bool,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            quantize: true,
            activation_bits: 1,
            ste_clip: true,
        }
    }
}

impl NetworkOptions {
    pub fn float_path() -> Self {
        NetworkOptions {
            quantize: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
enum Block {
    Conv { spec: ConvSpec, w: usize, bn: usize },
    Pool { window: (usize, usize) },
    Dropout,
    Dense { w: usize, bn: usize },
    Classifier { w: usize, b: usize },
}

#[derive(Clone, Debug)]
struct BnSlot {
    gamma: usize,
    beta: usize,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    options: NetworkOptions,
    params: Vec<ParamEntry>,
    blocks: Vec<Block>,
    bns: Vec<BnSlot>,
}

/// Output of one training-mode forward/backward pass.
pub struct StepResult {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub batch_stats: Vec<(usize, BatchNormCache)>,
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    params: Vec<ParamEntry>,
    bns: Vec<BnSlot>,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize, kind: ParamKind) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.params.push(ParamEntry {
            name,
            value: Tensor::from_vec(shape, data).expect("sized"),
            kind,
        });
        self.params.len() - 1
    }

    fn batch_norm(&mut self, name: &str, c: usize) -> usize {
        self.params.push(ParamEntry {
            name: format!("{name}.gamma"),
            value: Tensor::full(&[c], 1.0),
            kind: ParamKind::Float,
        });
        self.params.push(ParamEntry {
            name: format!("{name}.beta"),
            value: Tensor::zeros(&[c]),
            kind: ParamKind::Float,
        });
        let n = self.params.len();
        self.bns.push(BnSlot {
            gamma: n - 2,
            beta: n - 1,
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
        });
        self.bns.len() - 1
    }
}

impl Network {
    /// Builds the network with seeded uniform `±1/√fan_in` initialization.
    pub fn new(config: &ModelConfig, options: NetworkOptions, seed: u64) -> Result<Self> {
        let stages = config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            rng: &mut rng,
            params: Vec::new(),
            bns: Vec::new(),
        };
        let mut blocks = Vec::new();
        let in_shape = config.input_shape.dims();
        let mut c = in_shape[2] * if config.first_layer_mode.uses_bit_planes() { config.bits as usize } else { 1 };

        if config.first_layer_mode == FirstLayerMode::Bil {
            let k = config.bil_filters.expect("validated");
            let spec = ConvSpec {
                filters: k,
                kernel: (1, 1),
                axis_policy: config.axis_policy,
            };
            let w = b.weight("bil.w".into(), &spec.weight_shape(c), c, ParamKind::Binary);
            let bn = b.batch_norm("bil.bn", k);
            blocks.push(Block::Conv { spec, w, bn });
            c = k;
        }

        let mut seen_dense = false;
        let mut first_conv = true;
        let mut flat_in = 0;
        for (i, layer) in config.layers.iter().enumerate() {
            let prev = if i == 0 { None } else { Some(stages[i - 1]) };
            match *layer {
                LayerSpec::Conv { filters, kernel } => {
                    let spec = ConvSpec::new(filters, kernel, config.axis_policy);
                    let kind = if first_conv && config.first_layer_mode == FirstLayerMode::Baseline {
                        ParamKind::Float
                    } else {
                        ParamKind::Binary
                    };
                    first_conv = false;
                    let fan_in = spec.kernel_elems() * c;
                    let w = b.weight(format!("conv{i}.w"), &spec.weight_shape(c), fan_in, kind);
                    let bn = b.batch_norm(&format!("conv{i}.bn"), filters);
                    blocks.push(Block::Conv { spec, w, bn });
                    c = filters;
                }
                LayerSpec::MaxPool { window } => blocks.push(Block::Pool {
                    window: config.axis_policy.window(window),
                }),
                LayerSpec::Dense { units } => {
                    let d = prev.map(|s| s.numel()).unwrap_or(c);
                    if !seen_dense {
                        blocks.push(Block::Dropout);
                        seen_dense = true;
                    }
                    let w = b.weight(format!("fc{i}.w"), &[d, units], d, ParamKind::Binary);
                    let bn = b.batch_norm(&format!("fc{i}.bn"), units);
                    blocks.push(Block::Dense { w, bn });
                    c = units;
                }
                LayerSpec::Softmax => {
                    flat_in = prev.map(|s| s.numel()).unwrap_or(c);
                    if !seen_dense {
                        blocks.push(Block::Dropout);
                    }
                }
            }
        }
        let k = config.num_classes;
        let w = b.weight("classifier.w".into(), &[flat_in, k], flat_in, ParamKind::Float);
        b.params.push(ParamEntry {
            name: "classifier.b".into(),
            value: Tensor::zeros(&[k]),
            kind: ParamKind::Float,
        });
        let bias = b.params.len() - 1;
        blocks.push(Block::Classifier { w, b: bias });
        let Builder { params, bns, .. } = b;
        Ok(Network {
            config: config.clone(),
            options,
            params,
            blocks,
            bns,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn options(&self) -> NetworkOptions {
        self.options
    }

    pub fn params(&self) -> &[ParamEntry] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Running statistics of every batch-norm layer, in construction order.
    pub fn batch_norm_states(&self) -> Vec<BatchNormParams> {
        self.bns.iter().map(|s| self.bn_params(s)).collect()
    }

    pub fn set_running_stats(&mut self, index: usize, mean: Vec<f64>, var: Vec<f64>) -> Result<()> {
        let slot = self.bns.get_mut(index).ok_or_else(|| shape_err!("no batch norm {index}"))?;
        if mean.len() != slot.running_mean.len() || var.len() != slot.running_var.len() {
            return Err(shape_err!("running stats for batch norm {index} have the wrong length"));
        }
        slot.running_mean = mean;
        slot.running_var = var;
        Ok(())
    }

    fn bn_params(&self, s: &BnSlot) -> BatchNormParams {
        BatchNormParams {
            gamma: self.params[s.gamma].value.data().to_vec(),
            beta: self.params[s.beta].value.data().to_vec(),
            running_mean: s.running_mean.clone(),
            running_var: s.running_var.clone(),
            eps: BN_EPS,
        }
    }

    /// Parameters of the first convolution that touches the input: the
    /// BIL 1×1 layer in BIL mode.
    pub fn first_layer_weights(&self) -> &ParamEntry {
        match &self.blocks[0] {
            Block::Conv { w, .. } => &self.params[*w],
            _ => unreachable!("validated configs start with a convolution"),
        }
    }

    /// Input encoding for the configured mode, as an `N×H×W×C'` batch:
    /// normalized values (baseline), raw integers (FPID) or bit planes in
    /// `c·M + m` order (DBI, BIL).
    pub fn encode(&self, ds: &FixedDataset, idx: &[usize]) -> Result<Tensor> {
        if ds.shape() != &self.config.input_shape {
            return Err(shape_err!(
                "dataset samples are {:?}, model expects {:?}",
                ds.shape().dims(),
                self.config.input_shape.dims()
            ));
        }
        if ds.bits() != self.config.bits {
            return Err(shape_err!("dataset has {} bits, model expects {}", ds.bits(), self.config.bits));
        }
        let dims = self.config.input_shape.dims();
        let m = ds.bits() as usize;
        let per = ds.shape().numel();
        let mode = self.config.first_layer_mode;
        let top = max_value(ds.bits()) as f64;
        let width = if mode.uses_bit_planes() { per * m } else { per };
        let mut data = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            let vals = ds.sample_values(i);
            match mode {
                FirstLayerMode::Baseline => data.extend(vals.iter().map(|&v| v as f64 / top)),
                FirstLayerMode::Fpid => data.extend(vals.iter().map(|&v| v as f64)),
                FirstLayerMode::Dbi | FirstLayerMode::Bil => {
                    for &v in vals {
                        data.extend((0..m).map(|b| ((v >> b) & 1) as f64));
                    }
                }
            }
        }
        let c = if mode.uses_bit_planes() { dims[2] * m } else { dims[2] };
        Tensor::from_vec(&[idx.len(), dims[0], dims[1], c], data)
    }

    fn weight_var(&self, tape: &mut Tape, id: usize) -> Var {
        let p = &self.params[id];
        let v = tape.param(id, p.value.clone());
        if self.options.quantize && p.kind == ParamKind::Binary {
            tape.binarize(v)
        } else {
            v
        }
    }

    fn activation(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let k = self.options.quantize.then_some(self.options.activation_bits);
        tape.activation(x, k, self.options.ste_clip)
    }

    fn norm(&self, tape: &mut Tape, x: Var, bn: usize, training: bool, stats: &mut Vec<(usize, Var)>) -> Result<Var> {
        let slot = &self.bns[bn];
        if training {
            let g = tape.param(slot.gamma, self.params[slot.gamma].value.clone());
            let b = tape.param(slot.beta, self.params[slot.beta].value.clone());
            let y = tape.batch_norm(x, g, b, BN_EPS)?;
            stats.push((bn, y));
            Ok(y)
        } else {
            let (y, _) = layers::batch_norm_forward(tape.value(x), &self.bn_params(slot), false)?;
            Ok(tape.leaf(y))
        }
    }

    /// Records the forward pass on `tape` and returns the logits node plus
    /// the batch-norm nodes (training mode only).
    pub fn forward<R: Rng>(&self, tape: &mut Tape, input: Tensor, training: bool, rng: &mut R) -> Result<(Var, Vec<(usize, Var)>)> {
        self.forward_with(tape, input, training, training, rng)
    }

    fn forward_with<R: Rng>(
        &self,
        tape: &mut Tape,
        input: Tensor,
        batch_stats: bool,
        dropout: bool,
        rng: &mut R,
    ) -> Result<(Var, Vec<(usize, Var)>)> {
        let training = batch_stats;
        let n = input.shape()[0];
        let mut x = tape.leaf(input);
        let mut stats = Vec::new();
        for block in &self.blocks {
            x = match *block {
                Block::Conv { spec, w, bn } => {
                    let wv = self.weight_var(tape, w);
                    let y = tape.conv2d(x, wv, spec)?;
                    let y = self.norm(tape, y, bn, training, &mut stats)?;
                    self.activation(tape, y)?
                }
                Block::Pool { window } => tape.max_pool(x, window)?,
                Block::Dropout => {
                    if dropout && self.config.dropout > 0.0 {
                        tape.dropout(x, self.config.dropout, rng)?
                    } else {
                        x
                    }
                }
                Block::Dense { w, bn } => {
                    let flat = self.flatten(tape, x, n)?;
                    let wv = self.weight_var(tape, w);
                    let y = tape.dense(flat, wv, None)?;
                    let y = self.norm(tape, y, bn, training, &mut stats)?;
                    self.activation(tape, y)?
                }
                Block::Classifier { w, b } => {
                    let flat = self.flatten(tape, x, n)?;
                    let wv = tape.param(w, self.params[w].value.clone());
                    let bv = tape.param(b, self.params[b].value.clone());
                    tape.dense(flat, wv, Some(bv))?
                }
            };
        }
        Ok((x, stats))
    }

    fn flatten(&self, tape: &mut Tape, x: Var, n: usize) -> Result<Var> {
        let shape = tape.value(x).shape();
        if shape.len() == 2 {
            return Ok(x);
        }
        let d = tape.value(x).len() / n;
        tape.reshape(x, &[n, d])
    }

    /// Mean cross-entropy of a training-mode forward pass and the gradient
    /// of every parameter.
    pub fn step<R: Rng>(&self, exec: Execution, input: Tensor, labels: &[usize], rng: &mut R) -> Result<StepResult> {
        let mut tape = Tape::new(exec);
        let (logits, stats) = self.forward(&mut tape, input, true, rng)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        let grads = tape.backward(loss)?;
        let grads = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| grads.param_or_zero(i, p.value.shape()))
            .collect();
        let batch_stats = stats
            .into_iter()
            .map(|(bn, v)| (bn, tape.batch_stats(v).expect("batch norm node").clone()))
            .collect();
        Ok(StepResult {
            loss: tape.value(loss).data()[0],
            grads,
            batch_stats,
        })
    }

    /// Loss only, training-mode batch statistics, no dropout. Used for
    /// gradient checks.
    pub fn training_loss(&self, exec: Execution, input: Tensor, labels: &[usize]) -> Result<f64> {
        let mut tape = Tape::new(exec);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (logits, _) = self.forward_with(&mut tape, input, true, false, &mut rng)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        Ok(tape.value(loss).data()[0])
    }

    pub fn update_running_stats(&mut self, stats: &[(usize, BatchNormCache)]) {
        for (bn, cache) in stats {
            let mut p = self.bn_params(&self.bns[*bn]);
            p.update_running(cache);
            let slot = &mut self.bns[*bn];
            slot.running_mean = p.running_mean;
            slot.running_var = p.running_var;
        }
    }

    /// Sets the running batch-norm statistics to the size-weighted average
    /// of per-batch statistics over `idx`, with dropout off. Binary layers
    /// produce integer pre-activations and often near-constant channels,
    /// where a stale running mean flips whole groups of outputs; this ties
    /// inference to the current weights.
    pub fn recalibrate_batch_norm(&mut self, exec: Execution, ds: &FixedDataset, idx: &[usize], batch_size: usize) -> Result<()> {
        if idx.is_empty() {
            return Err(crate::Error::InvalidInput("cannot recalibrate on an empty dataset".into()));
        }
        let mut mean: Vec<Vec<f64>> = self.bns.iter().map(|s| vec![0.0; s.running_mean.len()]).collect();
        let mut var = mean.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for batch in idx.chunks(batch_size.max(1)) {
            let mut tape = Tape::new(exec);
            let (_, stats) = self.forward_with(&mut tape, self.encode(ds, batch)?, true, false, &mut rng)?;
            let w = batch.len() as f64 / idx.len() as f64;
            for (bn, v) in stats {
                let c = tape.batch_stats(v).expect("batch norm node");
                for (acc, x) in mean[bn].iter_mut().zip(&c.mean) {
                    *acc += w * x;
                }
                for (acc, x) in var[bn].iter_mut().zip(&c.var) {
                    *acc += w * x;
                }
            }
        }
        for (slot, (m, v)) in self.bns.iter_mut().zip(mean.into_iter().zip(var)) {
            slot.running_mean = m;
            slot.running_var = v;
        }
        Ok(())
    }

    /// Inference-mode logits.
    pub fn logits(&self, exec: Execution, input: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new(exec);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (logits, _) = self.forward(&mut tape, input, false, &mut rng)?;
        Ok(tape.value(logits).clone())
    }

    /// Misclassification percentage and mean loss over a dataset in
    /// inference mode.
    pub fn evaluate(&self, exec: Execution, ds: &FixedDataset, batch_size: usize) -> Result<(f64, f64)> {
        if ds.is_empty() {
            return Err(crate::Error::InvalidInput("cannot evaluate on an empty dataset".into()));
        }
        let mut wrong = 0usize;
        let mut loss = 0.0;
        let all: Vec<usize> = (0..ds.len()).collect();
        for chunk in all.chunks(batch_size.max(1)) {
            let logits = self.logits(exec, self.encode(ds, chunk)?)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.label(i)).collect();
            let (l, probs) = layers::softmax_cross_entropy(&logits, &labels)?;
            loss += l * chunk.len() as f64;
            let k = self.config.num_classes;
            for (row, &y) in probs.data().chunks(k).zip(&labels) {
                if argmax(row) != y {
                    wrong += 1;
                }
            }
        }
        Ok((100.0 * wrong as f64 / ds.len() as f64, loss / ds.len() as f64))
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
