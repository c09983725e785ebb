use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch-norm state over the innermost axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
}

impl BatchNormParams {
    /// Unit scale, zero shift, zero mean and unit variance: the identity
    /// map up to `eps`.
    pub fn identity(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    #[inline]
    pub fn normalize_inference(&self, ch: usize, v: f64) -> f64 {
        self.gamma[ch] * (v - self.running_mean[ch]) / (self.running_var[ch] + self.eps).sqrt() + self.beta[ch]
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        for ch in 0..self.channels() {
            self.running_mean[ch] = BN_MOMENTUM * self.running_mean[ch] + (1.0 - BN_MOMENTUM) * cache.mean[ch];
            self.running_var[ch] = BN_MOMENTUM * self.running_var[ch] + (1.0 - BN_MOMENTUM) * cache.var[ch];
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
}

fn channels_of(x: &Tensor, c: usize) -> Result<()> {
    if x.shape().last() != Some(&c) {
        return Err(shape_err!("batch norm over {c} channels got input {:?}", x.shape()));
    }
    Ok(())
}

/// Batch statistics in training mode, running statistics otherwise. The
/// cache is only produced in training mode.
pub fn batch_norm_forward(x: &Tensor, params: &BatchNormParams, training: bool) -> Result<(Tensor, Option<BatchNormCache>)> {
    let c = params.channels();
    channels_of(x, c)?;
    if !training {
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| params.normalize_inference(i % c, v))
            .collect();
        return Ok((Tensor::from_vec(x.shape(), data)?, None));
    }
    let (y, cache) = batch_norm_train(x, &params.gamma, &params.beta, params.eps)?;
    Ok((y, Some(cache)))
}

pub(crate) fn batch_norm_train(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> Result<(Tensor, BatchNormCache)> {
    let c = gamma.len();
    channels_of(x, c)?;
    let count = (x.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for (i, &v) in x.data().iter().enumerate() {
        mean[i % c] += v;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; c];
    for (i, &v) in x.data().iter().enumerate() {
        let d = v - mean[i % c];
        var[i % c] += d * d;
    }
    var.iter_mut().for_each(|v| *v /= count);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let xhat: Vec<f64> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - mean[i % c]) * inv_std[i % c])
        .collect();
    let y = xhat
        .iter()
        .enumerate()
        .map(|(i, &h)| gamma[i % c] * h + beta[i % c])
        .collect();
    Ok((
        Tensor::from_vec(x.shape(), y)?,
        BatchNormCache {
            xhat: Tensor::from_vec(x.shape(), xhat)?,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Returns `(dx, dgamma, dbeta)` for training-mode batch norm.
pub fn batch_norm_backward(grad_out: &Tensor, cache: &BatchNormCache, gamma: &[f64]) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let c = gamma.len();
    grad_out.same_shape(&cache.xhat)?;
    let count = (grad_out.len() / c) as f64;
    let mut dbeta = vec![0.0; c];
    let mut dgamma = vec![0.0; c];
    for (i, (&g, &h)) in grad_out.data().iter().zip(cache.xhat.data()).enumerate() {
        dbeta[i % c] += g;
        dgamma[i % c] += g * h;
    }
    let dx = grad_out
        .data()
        .iter()
        .zip(cache.xhat.data())
        .enumerate()
        .map(|(i, (&g, &h))| {
            let ch = i % c;
            gamma[ch] * cache.inv_std[ch] / count * (count * g - dbeta[ch] - h * dgamma[ch])
        })
        .collect();
    Ok((Tensor::from_vec(grad_out.shape(), dx)?, dgamma, dbeta))
}
