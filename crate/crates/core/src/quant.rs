//! Weight binarization, bounded activation, k-bit activation quantization
//! and the straight-through gradient rules that go with them.

use serde::{Deserialize, Serialize};

use crate::bitplane::{BinaryWeightTensor, PackedBits};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Binary,
    FullPrecision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// `k`, the activation bit width.
    pub activation_bits: u32,
    pub weight_mode: WeightMode,
    /// Gate the activation gradient to the clamp range `[0, 1]`.
    pub ste_clip: bool,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig {
            activation_bits: 1,
            weight_mode: WeightMode::Binary,
            ste_clip: true,
        }
    }
}

impl QuantizerConfig {
    /// Classifier head: weights stay full precision.
    pub fn last_layer() -> Self {
        QuantizerConfig {
            weight_mode: WeightMode::FullPrecision,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.activation_bits == 0 || self.activation_bits > 16 {
            return Err(invalid!("activation bits must be 1..=16, got {}", self.activation_bits));
        }
        Ok(())
    }
}

/// `w_b = sign(w) · mean(|w|)` with `sign(0) = +1`.
pub fn binarize_weights(latent: &Tensor) -> Result<BinaryWeightTensor> {
    if latent.is_empty() {
        return Err(invalid!("cannot binarize an empty tensor"));
    }
    if !latent.all_finite() {
        return Err(invalid!("latent weights contain non-finite values"));
    }
    let scale = binary_scale(latent.data());
    if scale == 0.0 {
        log::warn!("all-zero latent weights of shape {:?}: binary scale is 0", latent.shape());
    }
    let signs: Vec<bool> = latent.data().iter().map(|&w| w >= 0.0).collect();
    BinaryWeightTensor::new(latent.shape(), PackedBits::from_bools(&signs), scale)
}

/// Mean absolute value, accumulated in index order.
pub fn binary_scale(latent: &[f64]) -> f64 {
    latent.iter().map(|w| w.abs()).sum::<f64>() / latent.len() as f64
}

/// Effective `±α` values written straight into a dense tensor; the training
/// path uses this instead of building a packed tensor per step.
pub fn binarize_dense(latent: &Tensor) -> Tensor {
    let a = binary_scale(latent.data());
    latent.map(|w| if w >= 0.0 { a } else { -a })
}

/// The bounded activation `h`: clamp to `[0, 1]`.
#[inline]
pub fn bounded(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn bounded_activation(x: &Tensor) -> Tensor {
    x.map(bounded)
}

/// Nearest of the `2^k` uniform levels in `[0, 1]`, ties away from zero.
#[inline]
pub fn quantize_value(a: f64, k: u32) -> f64 {
    let levels = ((1u64 << k) - 1) as f64;
    (a * levels).round() / levels
}

pub fn quantize_k(a: &Tensor, k: u32) -> Result<Tensor> {
    if k == 0 || k > 16 {
        return Err(invalid!("k must be 1..=16, got {k}"));
    }
    if let Some((i, v)) = a.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(invalid!("quantize_k input {v} at index {i} is outside [0, 1]; apply the bounded activation first"));
    }
    Ok(a.map(|v| quantize_value(v, k)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SteKind {
    /// Sign binarization of weights: identity.
    WeightSign,
    /// Clamp + quantize of activations: identity inside `[0, 1]`, zero outside.
    ActivationQuant,
}

#[inline]
pub fn activation_ste_gate(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        1.0
    } else {
        0.0
    }
}

pub fn ste_backward(upstream: &Tensor, forward_input: &Tensor, kind: SteKind) -> Result<Tensor> {
    if upstream.shape() != forward_input.shape() {
        return Err(shape_err!(
            "gradient {:?} vs input {:?}",
            upstream.shape(),
            forward_input.shape()
        ));
    }
    Ok(match kind {
        SteKind::WeightSign => upstream.clone(),
        SteKind::ActivationQuant => {
            let data = upstream
                .data()
                .iter()
                .zip(forward_input.data())
                .map(|(&g, &x)| g * activation_ste_gate(x))
                .collect();
            Tensor::from_vec(upstream.shape(), data)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn binarize_examples() {
        let w = binarize_weights(&t(&[0.5, -0.3, 0.1])).unwrap();
        assert!((w.scale() - 0.3).abs() < 1e-15);
        let e = w.effective();
        assert_eq!(e.data(), &[w.scale(), -w.scale(), w.scale()]);

        let w = binarize_weights(&t(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(w.effective().data(), &[1.0, 1.0, 1.0]);

        let w = binarize_weights(&t(&[-2.0, 2.0])).unwrap();
        assert_eq!(w.effective().data(), &[-2.0, 2.0]);
    }

    #[test]
    fn sign_of_zero_is_positive() {
        let w = binarize_weights(&t(&[0.0, -1.0])).unwrap();
        assert!(w.signs().get(0));
        assert!(!w.signs().get(1));
    }

    #[test]
    fn all_zero_gives_zero_scale() {
        let w = binarize_weights(&t(&[0.0, 0.0])).unwrap();
        assert_eq!(w.scale(), 0.0);
        assert_eq!(w.effective().data(), &[0.0, 0.0]);
    }

    #[test]
    fn binarize_rejects_empty_and_nan() {
        assert!(binarize_weights(&Tensor::zeros(&[0])).is_err());
        assert!(binarize_weights(&t(&[f64::NAN])).is_err());
    }

    #[test]
    fn bounded_examples() {
        assert_eq!(bounded_activation(&t(&[1.7, -0.2, 0.4])).data(), &[1.0, 0.0, 0.4]);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_k(&t(&[0.7, 0.3, 0.5]), 1).unwrap().data(), &[1.0, 0.0, 1.0]);
        assert_eq!(quantize_k(&t(&[0.5]), 2).unwrap().data(), &[2.0 / 3.0]);
        assert!(quantize_k(&t(&[1.2]), 1).is_err());
        assert!(quantize_k(&t(&[-0.1]), 1).is_err());
        assert!(quantize_k(&t(&[0.1]), 0).is_err());
    }

    #[test]
    fn ste_examples() {
        let g = ste_backward(&t(&[1.0, 2.0]), &t(&[0.3, 0.8]), SteKind::ActivationQuant).unwrap();
        assert_eq!(g.data(), &[1.0, 2.0]);
        let g = ste_backward(&t(&[1.0]), &t(&[1.5]), SteKind::ActivationQuant).unwrap();
        assert_eq!(g.data(), &[0.0]);
        let up = t(&[0.25, -3.0, 9.0]);
        let g = ste_backward(&up, &t(&[5.0, -5.0, 0.5]), SteKind::WeightSign).unwrap();
        assert_eq!(g, up);
        assert!(ste_backward(&t(&[1.0]), &t(&[1.0, 2.0]), SteKind::WeightSign).is_err());
    }

    proptest! {
        #[test]
        fn binarized_takes_two_values(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
            let w = binarize_weights(&t(&v)).unwrap();
            let a = w.scale();
            let mean = v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
            prop_assert!((a - mean).abs() <= f64::EPSILON * mean.max(1e-300) * 2.0);
            for e in w.effective().data() {
                prop_assert!(*e == a || *e == -a);
            }
        }

        #[test]
        fn quantize_idempotent_and_bounded(a in 0.0f64..=1.0, k in 1u32..=8) {
            let q = quantize_value(a, k);
            prop_assert_eq!(quantize_value(q, k), q);
            let levels = ((1u64 << k) - 1) as f64;
            prop_assert!((q - a).abs() <= 1.0 / (2.0 * levels) + 1e-15);
        }

        #[test]
        fn weight_ste_is_identity(g in prop::collection::vec(-5.0f64..5.0, 1..32)) {
            let x = Tensor::zeros(&[g.len()]);
            prop_assert_eq!(ste_backward(&t(&g), &x, SteKind::WeightSign).unwrap(), t(&g));
        }
    }
}
