//! Packed binary kernels and the bit-level first-layer strategies.

use super::{BatchNormParams, BilSpec, ConvSpec};
use crate::bitplane::{signed_popcount, BinaryTensor, BinaryWeightTensor, BitPlaneTensor, FixedTensor, PackedBits, Shape};
use crate::error::{invalid, shape_err, Result};
use crate::par::{self, Execution};
use crate::quant::{bounded, quantize_value, QuantizerConfig};
use crate::tensor::Tensor;

fn hwc(shape: &Shape) -> Result<[usize; 3]> {
    match *shape.dims() {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(shape_err!("expected H×W×C, got {:?}", shape.dims())),
    }
}

fn check_binary_weights(weights: &BinaryWeightTensor, in_c: usize, spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    let want = spec.weight_shape(in_c);
    if weights.shape() != want {
        return Err(shape_err!("binary weights {:?}, expected {:?}", weights.shape(), want));
    }
    Ok(())
}

/// Re-packs `kh×kw×C×I` signs into one contiguous bit row per filter.
fn filter_rows(weights: &BinaryWeightTensor, taps: usize, nf: usize) -> Vec<PackedBits> {
    (0..nf)
        .map(|f| {
            let mut row = PackedBits::zeros(taps);
            for t in 0..taps {
                if weights.signs().get(t * nf + f) {
                    row.set(t, true);
                }
            }
            row
        })
        .collect()
}

pub fn conv2d_binary(input: &BinaryTensor, weights: &BinaryWeightTensor, spec: &ConvSpec) -> Result<Tensor> {
    conv2d_binary_with(Execution::default(), input, weights, spec)
}

/// Convolution of a `{0,1}` input with `±α` weights using XNOR-popcount:
/// for each output, the receptive field is gathered into one bit row and
/// reduced with `2·popcount(x AND w⁺) − popcount(x)`, then scaled once.
pub fn conv2d_binary_with(exec: Execution, input: &BinaryTensor, weights: &BinaryWeightTensor, spec: &ConvSpec) -> Result<Tensor> {
    let [h, w, c] = hwc(input.shape())?;
    check_binary_weights(weights, c, spec)?;
    let (kh, kw) = spec.kernel;
    let (pt, pl) = spec.padding();
    let nf = spec.filters;
    let taps = kh * kw * c;
    let rows = filter_rows(weights, taps, nf);
    let alpha = weights.scale();
    let src = input.bits();
    let mut out = Tensor::zeros(&[h, w, nf]);
    par::for_each_chunk_mut(exec, out.data_mut(), w * nf, |y, orow| {
        let mut patch = PackedBits::zeros(taps);
        for x in 0..w {
            patch.clear();
            // valid dx range for this column
            let dx0 = pl.saturating_sub(x);
            let dx1 = kw.min(w + pl - x);
            for dy in 0..kh {
                let Some(yy) = (y + dy).checked_sub(pt).filter(|&v| v < h) else {
                    continue;
                };
                if dx0 >= dx1 {
                    continue;
                }
                let xx0 = x + dx0 - pl;
                patch.copy_from((dy * kw + dx0) * c, src, (yy * w + xx0) * c, (dx1 - dx0) * c);
            }
            let o = &mut orow[x * nf..(x + 1) * nf];
            for (v, row) in o.iter_mut().zip(&rows) {
                *v = alpha * signed_popcount(&patch, row) as f64;
            }
        }
    });
    Ok(out)
}

/// `Σ_m 2^m (x_m · w)` for one tap with `w = ±1`, in integers.
#[inline]
pub fn fpid_tap_sum(x: u16, bits: u8, positive: bool) -> i64 {
    let w: i64 = if positive { 1 } else { -1 };
    (0..bits as u32).map(|m| (1i64 << m) * (((x >> m) & 1) as i64 * w)).sum()
}

/// First layer on raw M-bit fixed-point inputs with one shared binary weight
/// per tap: each tap contributes `Σ_m 2^m (x_m · w)`, accumulated as an
/// integer and scaled by `α` once per output.
pub fn fpid_first_layer(input: &FixedTensor, weights: &BinaryWeightTensor, spec: &ConvSpec) -> Result<Tensor> {
    let [h, w, c] = hwc(input.shape())?;
    check_binary_weights(weights, c, spec)?;
    let (kh, kw) = spec.kernel;
    let (pt, pl) = spec.padding();
    let nf = spec.filters;
    let bits = input.bit_width();
    let vals = input.values();
    let mut out = vec![0.0; h * w * nf];
    for y in 0..h {
        for x in 0..w {
            for f in 0..nf {
                let mut acc = 0i64;
                for dy in 0..kh {
                    let Some(yy) = (y + dy).checked_sub(pt).filter(|&v| v < h) else {
                        continue;
                    };
                    for dx in 0..kw {
                        let Some(xx) = (x + dx).checked_sub(pl).filter(|&v| v < w) else {
                            continue;
                        };
                        for ch in 0..c {
                            let positive = weights.signs().get(((dy * kw + dx) * c + ch) * nf + f);
                            acc += fpid_tap_sum(vals[(yy * w + xx) * c + ch], bits, positive);
                        }
                    }
                }
                out[(y * w + x) * nf + f] = weights.scale() * acc as f64;
            }
        }
    }
    Tensor::from_vec(&[h, w, nf], out)
}

/// First layer with an independent binary weight per input bit: the
/// `C·M` bit planes are treated as channels of a binary convolution.
pub fn dbi_first_layer(input: &BitPlaneTensor, weights: &BinaryWeightTensor, spec: &ConvSpec) -> Result<Tensor> {
    let planes = input.plane_count();
    if weights.shape().get(2) != Some(&planes) {
        return Err(shape_err!(
            "DBI weights need {planes} input channels (C·M), got shape {:?}",
            weights.shape()
        ));
    }
    conv2d_binary(input.as_binary(), weights, spec)
}

/// Binary input layer: 1×1 binary conv with `K` filters over the bit
/// planes, then inference batch norm, bounded activation and 1-bit
/// quantization. Output is `H×W×K` in `{0,1}`.
pub fn bil_first_layer(
    input: &BitPlaneTensor,
    bil: &BilSpec,
    weights: &BinaryWeightTensor,
    bn: &BatchNormParams,
    qcfg: &QuantizerConfig,
) -> Result<BinaryTensor> {
    if bil.filters == 0 {
        return Err(invalid!("BIL needs K >= 1"));
    }
    qcfg.validate()?;
    if qcfg.activation_bits != 1 {
        return Err(invalid!("BIL output is binary; activation bits must be 1, got {}", qcfg.activation_bits));
    }
    if bn.channels() != bil.filters {
        return Err(shape_err!("batch norm has {} channels, BIL has K={}", bn.channels(), bil.filters));
    }
    let s = dbi_first_layer(input, weights, &bil.conv())?;
    let k = bil.filters;
    let shape = Shape::new(s.shape())?;
    let mut outb = BinaryTensor::zeros(shape);
    for (i, &v) in s.data().iter().enumerate() {
        let a = quantize_value(bounded(bn.normalize_inference(i % k, v)), 1);
        if a == 1.0 {
            outb.bits_mut().set(i, true);
        }
    }
    Ok(outb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitplane::decompose;
    use crate::layers::{conv2d_reference, AxisPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_binary(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> BinaryTensor {
        let bits: Vec<bool> = (0..h * w * c).map(|_| rng.gen()).collect();
        BinaryTensor::new(Shape::hwc(h, w, c).unwrap(), PackedBits::from_bools(&bits)).unwrap()
    }

    fn rand_weights(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> BinaryWeightTensor {
        let n = shape.iter().product();
        let signs: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let alpha = rng.gen_range(1..=64) as f64 / 16.0;
        BinaryWeightTensor::from_signs(&shape, &signs, alpha).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = BinaryTensor::zeros(Shape::hwc(3, 4, 2).unwrap());
        let spec = ConvSpec::new(3, 3, AxisPolicy::Full2d);
        let w = rand_weights(&mut rng, spec.weight_shape(2));
        assert!(conv2d_binary(&x, &w, &spec).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_tap_positive_weight() {
        let x = BinaryTensor::new(Shape::hwc(1, 1, 1).unwrap(), PackedBits::from_bools(&[true])).unwrap();
        let w = BinaryWeightTensor::from_signs(&[1, 1, 1, 1], &[true], 0.75).unwrap();
        let out = conv2d_binary(&x, &w, &ConvSpec::new(1, 1, AxisPolicy::Full2d)).unwrap();
        assert_eq!(out.data(), &[0.75]);
    }

    #[test]
    fn binary_conv_matches_reference_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (h, w, c, nf) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=4), rng.gen_range(1..=4));
            let spec = ConvSpec {
                filters: nf,
                kernel: (rng.gen_range(1..=4), rng.gen_range(1..=4)),
                axis_policy: AxisPolicy::Full2d,
            };
            let x = rand_binary(&mut rng, h, w, c);
            let wt = rand_weights(&mut rng, spec.weight_shape(c));
            let fast = conv2d_binary(&x, &wt, &spec).unwrap();
            let slow = conv2d_reference(&x.to_tensor(), &wt.effective(), &spec).unwrap().output;
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn binary_conv_exec_modes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_binary(&mut rng, 16, 20, 8);
        let spec = ConvSpec::new(6, 3, AxisPolicy::Full2d);
        let w = rand_weights(&mut rng, spec.weight_shape(8));
        assert_eq!(
            conv2d_binary_with(Execution::Sequential, &x, &w, &spec).unwrap(),
            conv2d_binary_with(Execution::Parallel, &x, &w, &spec).unwrap()
        );
    }

    #[test]
    fn fpid_examples() {
        let t = FixedTensor::new(Shape::hwc(1, 1, 1).unwrap(), 3, vec![6]).unwrap();
        let w = BinaryWeightTensor::from_signs(&[1, 1, 1, 1], &[true], 0.5).unwrap();
        let spec = ConvSpec::new(1, 1, AxisPolicy::Full2d);
        assert_eq!(fpid_first_layer(&t, &w, &spec).unwrap().data(), &[3.0]);
        let t = FixedTensor::new(Shape::hwc(1, 1, 1).unwrap(), 3, vec![0]).unwrap();
        assert_eq!(fpid_first_layer(&t, &w, &spec).unwrap().data(), &[0.0]);
    }

    #[test]
    fn fpid_tap_is_signed_value() {
        for bits in [1u8, 4, 8, 16] {
            for x in [0u16, 1, 5, crate::bitplane::max_value(bits)] {
                let x = x.min(crate::bitplane::max_value(bits));
                assert_eq!(fpid_tap_sum(x, bits, true), x as i64);
                assert_eq!(fpid_tap_sum(x, bits, false), -(x as i64));
            }
        }
    }

    #[test]
    fn dbi_hand_example() {
        let t = FixedTensor::new(Shape::hwc(1, 1, 1).unwrap(), 3, vec![5]).unwrap();
        let w = BinaryWeightTensor::from_signs(&[1, 1, 3, 1], &[true, false, true], 1.0).unwrap();
        let out = dbi_first_layer(&decompose(&t), &w, &ConvSpec::new(1, 1, AxisPolicy::Full2d)).unwrap();
        assert_eq!(out.data(), &[2.0]);
    }

    #[test]
    fn dbi_all_positive_counts_set_bits() {
        let w = BinaryWeightTensor::from_signs(&[1, 1, 8, 1], &[true; 8], 0.5).unwrap();
        for x in [0u16, 1, 77, 255] {
            let t = FixedTensor::new(Shape::hwc(1, 1, 1).unwrap(), 8, vec![x]).unwrap();
            let out = dbi_first_layer(&decompose(&t), &w, &ConvSpec::new(1, 1, AxisPolicy::Full2d)).unwrap();
            assert_eq!(out.data(), &[0.5 * x.count_ones() as f64]);
        }
    }

    #[test]
    fn dbi_channel_mismatch_rejected() {
        let t = FixedTensor::new(Shape::hwc(1, 1, 2).unwrap(), 4, vec![1, 2]).unwrap();
        let w = BinaryWeightTensor::from_signs(&[1, 1, 2, 1], &[true; 2], 1.0).unwrap();
        assert!(dbi_first_layer(&decompose(&t), &w, &ConvSpec::new(1, 1, AxisPolicy::Full2d)).is_err());
    }

    #[test]
    fn bil_pamap2_output_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vals: Vec<u16> = (0..700).map(|_| rng.gen_range(0..256)).collect();
        let t = FixedTensor::new(Shape::hwc(7, 100, 1).unwrap(), 8, vals).unwrap();
        let bil = BilSpec::new(64).unwrap();
        let w = rand_weights(&mut rng, bil.conv().weight_shape(8));
        let out = bil_first_layer(&decompose(&t), &bil, &w, &BatchNormParams::identity(64), &QuantizerConfig::default()).unwrap();
        assert_eq!(out.shape().dims(), &[7, 100, 64]);
    }

    #[test]
    fn bil_hand_pipeline_2x2() {
        // K=1, all weights +α, identity BN (up to ε): out = q1(clamp(α·(2·pop − pop))) = q1(clamp(α·pop))
        let vals = vec![0u16, 1, 3, 7];
        let t = FixedTensor::new(Shape::hwc(2, 2, 1).unwrap(), 3, vals).unwrap();
        let w = BinaryWeightTensor::from_signs(&[1, 1, 3, 1], &[true; 3], 0.3).unwrap();
        let bil = BilSpec::new(1).unwrap();
        let out = bil_first_layer(&decompose(&t), &bil, &w, &BatchNormParams::identity(1), &QuantizerConfig::default()).unwrap();
        // popcounts 0,1,2,3 → 0, .3, .6, .9 → quantized 0,0,1,1
        let got: Vec<bool> = out.bits().iter().collect();
        assert_eq!(got, [false, false, true, true]);
    }

    #[test]
    fn bil_zero_input_zero_output() {
        let t = FixedTensor::new(Shape::hwc(2, 3, 2).unwrap(), 8, vec![0; 12]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bil = BilSpec::new(5).unwrap();
        let w = rand_weights(&mut rng, bil.conv().weight_shape(16));
        let out = bil_first_layer(&decompose(&t), &bil, &w, &BatchNormParams::identity(5), &QuantizerConfig::default()).unwrap();
        assert_eq!(out.bits().count_ones(), 0);
    }

    #[test]
    fn bil_rejects_zero_k_and_multibit() {
        assert!(BilSpec::new(0).is_err());
        let t = FixedTensor::new(Shape::hwc(1, 1, 1).unwrap(), 2, vec![1]).unwrap();
        let w = BinaryWeightTensor::from_signs(&[1, 1, 2, 1], &[true; 2], 1.0).unwrap();
        let q = QuantizerConfig { activation_bits: 2, ..Default::default() };
        let r = bil_first_layer(&decompose(&t), &BilSpec::new(1).unwrap(), &w, &BatchNormParams::identity(1), &q);
        assert!(r.is_err());
        let r = bil_first_layer(&decompose(&t), &BilSpec { filters: 0 }, &w, &BatchNormParams::identity(1), &QuantizerConfig::default());
        assert!(r.is_err());
    }
}
