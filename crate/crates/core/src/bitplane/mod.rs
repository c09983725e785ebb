//! Fixed-point tensors and their bit-plane decomposition.
//!
//! An M-bit value `x` is split into planes `x_m` with `x = Σ_m x_m·2^m`,
//! plane 0 being the least significant bit. A tensor of shape `H×W×C`
//! decomposes into a binary tensor of shape `H×W×(C·M)` whose innermost
//! index is `c·M + m`, so every channel's planes sit next to each other.

mod container;
mod packed;

pub use container::Container;
pub use packed::{binary_dot_01, signed_popcount, BinaryTensor, BinaryWeightTensor, PackedBits, WORD_BITS};

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

pub const MAX_BITS: u8 = 16;
pub const MAX_RANK: usize = 4;

/// Tensor dimensions, at most four, all nonzero. For images the order is
/// `H, W, C`; time series use `channels, time, 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(shape_err!("rank must be 1..={MAX_RANK}, got {}", dims.len()));
        }
        if dims.contains(&0) {
            return Err(shape_err!("zero-sized dimension in {:?}", dims));
        }
        dims.iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .filter(|&n| usize::try_from(n).is_ok())
            .ok_or_else(|| crate::Error::Overflow(format!("element count of {:?}", dims)))?;
        Ok(Shape(dims.to_vec()))
    }

    pub fn hwc(h: usize, w: usize, c: usize) -> Result<Self> {
        Shape::new(&[h, w, c])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Innermost (channel) dimension.
    pub fn channels(&self) -> usize {
        *self.0.last().expect("nonempty shape")
    }

    /// Same shape with the innermost dimension replaced.
    pub fn with_channels(&self, c: usize) -> Result<Self> {
        let mut d = self.0.clone();
        *d.last_mut().expect("nonempty shape") = c;
        Shape::new(&d)
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = crate::Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Shape::new(&v)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(invalid!("bit width must be 1..={MAX_BITS}, got {bits}"));
    }
    Ok(())
}

/// Unsigned M-bit fixed-point tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedTensor {
    shape: Shape,
    bits: u8,
    values: Vec<u16>,
}

impl FixedTensor {
    pub fn new(shape: Shape, bits: u8, values: Vec<u16>) -> Result<Self> {
        check_bits(bits)?;
        if values.len() != shape.numel() {
            return Err(shape_err!("{:?} needs {} values, got {}", shape.dims(), shape.numel(), values.len()));
        }
        let max = max_value(bits);
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v > max) {
            return Err(invalid!("value {v} at index {i} does not fit in {bits} bits"));
        }
        Ok(FixedTensor { shape, bits, values })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bit_width(&self) -> u8 {
        self.bits
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u16> {
        self.values
    }

    /// Integer values as reals, no normalization.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.values.iter().map(|&v| v as f64).collect();
        Tensor::from_vec(self.shape.dims(), data).expect("shape matches")
    }

    /// Values divided by `2^M − 1`, i.e. mapped onto `[0, 1]`.
    pub fn normalized(&self) -> Tensor {
        let d = max_value(self.bits) as f64;
        self.to_tensor().map(|v| v / d)
    }
}

#[inline]
pub fn max_value(bits: u8) -> u16 {
    ((1u32 << bits) - 1) as u16
}

/// Affinely maps `[lo, hi]` onto `0..=2^M−1`, rounding half away from zero
/// and saturating outside the range.
pub fn to_fixed_point(raw: &Tensor, lo: f64, hi: f64, bits: u8) -> Result<FixedTensor> {
    check_bits(bits)?;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(invalid!("need finite lo < hi, got lo={lo} hi={hi}"));
    }
    let shape = Shape::new(raw.shape())?;
    let top = max_value(bits) as f64;
    let values = raw
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() {
                return Err(invalid!("non-finite value {v} at index {i}"));
            }
            let q = ((v - lo) / (hi - lo) * top).round();
            Ok(q.clamp(0.0, top) as u16)
        })
        .collect::<Result<Vec<_>>>()?;
    FixedTensor::new(shape, bits, values)
}

/// Bit-decomposed tensor: logical shape is the base shape with the channel
/// dimension multiplied by `M`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitPlaneTensor {
    base_shape: Shape,
    bits: u8,
    planes: BinaryTensor,
}

impl BitPlaneTensor {
    pub fn from_planes(base_shape: Shape, bits: u8, planes: BinaryTensor) -> Result<Self> {
        check_bits(bits)?;
        let expect = base_shape.with_channels(base_shape.channels() * bits as usize)?;
        if planes.shape() != &expect {
            return Err(shape_err!(
                "planes {:?} do not match base {:?} at {bits} bits",
                planes.shape().dims(),
                base_shape.dims()
            ));
        }
        Ok(BitPlaneTensor {
            base_shape,
            bits,
            planes,
        })
    }

    pub fn base_shape(&self) -> &Shape {
        &self.base_shape
    }

    pub fn bit_width(&self) -> u8 {
        self.bits
    }

    /// Number of planes, `C·M`.
    pub fn plane_count(&self) -> usize {
        self.base_shape.channels() * self.bits as usize
    }

    /// The `H×W×(C·M)` binary view.
    pub fn as_binary(&self) -> &BinaryTensor {
        &self.planes
    }

    pub fn into_binary(self) -> BinaryTensor {
        self.planes
    }

    /// Bit `m` of every base value, in base row-major order.
    pub fn plane(&self, m: usize) -> Vec<bool> {
        assert!(m < self.bits as usize, "plane {m} out of range");
        let bits = self.bits as usize;
        (0..self.base_shape.numel())
            .map(|i| self.planes.bits().get(i * bits + m))
            .collect()
    }
}

/// Splits every value into its `M` bits, LSB first.
pub fn decompose(t: &FixedTensor) -> BitPlaneTensor {
    let m = t.bits as usize;
    let mut bits = PackedBits::zeros(t.values.len() * m);
    for (i, &v) in t.values.iter().enumerate() {
        bits.set_bits(i * m, m, v as u64);
    }
    let shape = t
        .shape
        .with_channels(t.shape.channels() * m)
        .expect("bit count fits: checked when the fixed tensor was built");
    BitPlaneTensor {
        base_shape: t.shape.clone(),
        bits: t.bits,
        planes: BinaryTensor::new(shape, bits).expect("sized above"),
    }
}

/// Exact inverse of [`decompose`].
pub fn recompose(b: &BitPlaneTensor) -> FixedTensor {
    let m = b.bits as usize;
    let values = (0..b.base_shape.numel())
        .map(|i| b.planes.bits().get_bits(i * m, m) as u16)
        .collect();
    FixedTensor {
        shape: b.base_shape.clone(),
        bits: b.bits,
        values,
    }
}
