use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::data::FixedDataset;
use crate::model::{ModelConfig, Network, NetworkOptions};
use crate::par::Execution;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub initial_lr: f64,
    /// `(epoch, multiplier)`: from that epoch on the rate is scaled.
    pub lr_schedule: Vec<(usize, f64)>,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    /// Also evaluate the training set in inference mode after every epoch.
    #[serde(default = "yes")]
    pub eval_train: bool,
    /// After every epoch, replace the running batch-norm statistics with
    /// statistics of the current weights over the whole training set.
    #[serde(default = "yes")]
    pub recalibrate_bn: bool,
}

fn yes() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            adam: AdamConfig::default(),
            initial_lr: 1e-4,
            lr_schedule: vec![(100, 0.1), (150, 0.1)],
            batch_size: 64,
            seed: 0,
            execution: Execution::default(),
            eval_train: true,
            recalibrate_bn: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.initial_lr));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.lr_schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("learning-rate schedule epochs must be strictly increasing".into());
        }
        if self.lr_schedule.iter().any(|&(_, f)| !(f.is_finite() && f > 0.0)) {
            return bad("learning-rate multipliers must be positive".into());
        }
        Ok(())
    }

    /// Rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .filter(|&&(e, _)| e <= epoch)
            .fold(self.initial_lr, |lr, &(_, f)| lr * f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// One metrics record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub error_pct: f64,
    pub loss: f64,
    pub lr: f64,
}

pub struct TrainOutcome {
    pub network: Network,
    pub metrics: Vec<EpochMetrics>,
    pub final_val_error: Option<f64>,
    /// `(epoch, error)` of the lowest validation error, earliest on ties.
    pub best_val_error: Option<(usize, f64)>,
}

fn check_data(model: &ModelConfig, ds: &FixedDataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::InvalidInput(format!("{what} set is empty")));
    }
    if ds.shape() != &model.input_shape || ds.bits() != model.bits {
        return Err(Error::Config(format!(
            "{what} samples are {:?} at {} bits, model expects {:?} at {} bits",
            ds.shape().dims(),
            ds.bits(),
            model.input_shape.dims(),
            model.bits
        )));
    }
    if ds.labels().iter().any(|&l| l >= model.num_classes) {
        return Err(Error::Config(format!("{what} labels exceed the model's {} classes", model.num_classes)));
    }
    Ok(())
}

/// Trains from a fresh seeded initialization for exactly `cfg.epochs`
/// epochs. Identical inputs give bit-identical weights and metrics,
/// whichever execution policy is chosen.
pub fn train(
    model: &ModelConfig,
    options: NetworkOptions,
    train_set: &FixedDataset,
    val_set: Option<&FixedDataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_data(model, train_set, "training")?;
    if let Some(v) = val_set {
        check_data(model, v, "validation")?;
    }
    let mut net = Network::new(model, options, cfg.seed)?;
    let mut opt = AdamState::new(net.params().iter().map(|p| p.value.shape()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let exec = cfg.execution;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut last_val = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.label(i)).collect();
            let input = net.encode(train_set, batch)?;
            let step = net.step(exec, input, &labels, &mut rng)?;
            if !step.loss.is_finite() || step.grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            loss_sum += step.loss * batch.len() as f64;
            net.update_running_stats(&step.batch_stats);
            adam_step(net.params_mut().iter_mut().map(|p| &mut p.value), &step.grads, &mut opt, lr, &cfg.adam)?;
            // An overflowing update shows up here before it reaches the loss.
            if net.params().iter().any(|p| !p.value.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        if cfg.recalibrate_bn {
            net.recalibrate_batch_norm(exec, train_set, &order, cfg.batch_size)?;
        }
        let (err, loss) = if cfg.eval_train {
            net.evaluate(exec, train_set, cfg.batch_size.max(256))?
        } else {
            (f64::NAN, loss_sum / train_set.len() as f64)
        };
        metrics.push(EpochMetrics {
            epoch,
            split: Split::Train,
            error_pct: err,
            loss,
            lr,
        });
        let mut line = format!("epoch {epoch}: train error {err:.2}% loss {loss:.4}");
        if let Some(v) = val_set {
            let (verr, vloss) = net.evaluate(exec, v, cfg.batch_size.max(256))?;
            metrics.push(EpochMetrics {
                epoch,
                split: Split::Validation,
                error_pct: verr,
                loss: vloss,
                lr,
            });
            if best.is_none_or(|(_, b)| verr < b) {
                best = Some((epoch, verr));
            }
            last_val = Some(verr);
            line.push_str(&format!(", validation error {verr:.2}%"));
        }
        log::info!("{line}");
    }
    Ok(TrainOutcome {
        network: net,
        metrics,
        final_val_error: last_val,
        best_val_error: best,
    })
}
