//! 64-bit word packed bit vectors and the popcount dot-product core.

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

use super::Shape;

pub const WORD_BITS: usize = 64;

/// Bit vector packed LSB-first into `u64` words. Padding bits past `len`
/// are kept at zero by every constructor and mutator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PackedBits {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

#[inline]
fn low_mask(n: usize) -> u64 {
    if n >= WORD_BITS {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl PackedBits {
    pub fn zeros(len: usize) -> Self {
        PackedBits {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut p = PackedBits::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                p.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        p
    }

    /// Builds from raw words, clearing any bits past `len`.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(shape_err!(
                "{} bits need {} words, got {}",
                len,
                words_for(len),
                words.len()
            ));
        }
        if let Some(last) = words.last_mut() {
            *last &= Self::tail_mask(len);
        }
        Ok(PackedBits { words, len })
    }

    fn tail_mask(len: usize) -> u64 {
        match len % WORD_BITS {
            0 => u64::MAX,
            r => low_mask(r),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// True if every padding bit in the final word is zero.
    pub fn padding_is_clear(&self) -> bool {
        match self.words.last() {
            Some(&w) => w & !Self::tail_mask(self.len) == 0,
            None => true,
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let w = &mut self.words[i / WORD_BITS];
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    /// Reads `n <= 64` bits starting at `start` into the low bits of a word.
    #[inline]
    pub fn get_bits(&self, start: usize, n: usize) -> u64 {
        debug_assert!(n <= WORD_BITS && start + n <= self.len);
        if n == 0 {
            return 0;
        }
        let wi = start / WORD_BITS;
        let off = start % WORD_BITS;
        let mut v = self.words[wi] >> off;
        if off + n > WORD_BITS {
            v |= self.words[wi + 1] << (WORD_BITS - off);
        }
        v & low_mask(n)
    }

    /// Writes the low `n <= 64` bits of `value` starting at `start`.
    #[inline]
    pub fn set_bits(&mut self, start: usize, n: usize, value: u64) {
        debug_assert!(n <= WORD_BITS && start + n <= self.len);
        if n == 0 {
            return;
        }
        let value = value & low_mask(n);
        let wi = start / WORD_BITS;
        let off = start % WORD_BITS;
        let m = low_mask(n) << off;
        self.words[wi] = (self.words[wi] & !m) | (value << off);
        if off + n > WORD_BITS {
            let spill = off + n - WORD_BITS;
            let m2 = low_mask(spill);
            self.words[wi + 1] = (self.words[wi + 1] & !m2) | (value >> (WORD_BITS - off));
        }
    }

    /// Copies `n` bits from `src[src_start..]` into `self[dst_start..]`.
    pub fn copy_from(&mut self, dst_start: usize, src: &PackedBits, src_start: usize, n: usize) {
        let mut done = 0;
        while done < n {
            let step = (n - done).min(WORD_BITS);
            let v = src.get_bits(src_start + done, step);
            self.set_bits(dst_start + done, step, v);
            done += step;
        }
    }

    pub fn count_ones(&self) -> u64 {
        let Some((last, body)) = self.words.split_last() else {
            return 0;
        };
        body.iter().map(|w| w.count_ones() as u64).sum::<u64>()
            + (last & Self::tail_mask(self.len)).count_ones() as u64
    }

    /// `popcount(self AND other)`, ignoring padding.
    pub fn and_count(&self, other: &PackedBits) -> u64 {
        debug_assert_eq!(self.len, other.len);
        let Some(last) = self.words.len().checked_sub(1) else {
            return 0;
        };
        let mut acc = 0u64;
        for i in 0..last {
            acc += (self.words[i] & other.words[i]).count_ones() as u64;
        }
        acc + (self.words[last] & other.words[last] & Self::tail_mask(self.len)).count_ones() as u64
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    #[cfg(test)]
    pub(crate) fn words_mut_unchecked(&mut self) -> &mut [u64] {
        &mut self.words
    }
}

/// Signed popcount core for a `{0,1}` input against `±1` signs (bit set = +1):
/// `2·popcount(x AND w⁺) − popcount(x)`.
#[inline]
pub fn signed_popcount(x: &PackedBits, signs: &PackedBits) -> i64 {
    2 * x.and_count(signs) as i64 - x.count_ones() as i64
}

/// `Σ x_i·w_i` for `x_i ∈ {0,1}` and `w_i ∈ {−α,+α}`, via one popcount pass
/// and a single scale multiply.
pub fn binary_dot_01(x: &PackedBits, w: &BinaryWeightTensor) -> Result<f64> {
    if x.len() != w.signs.len() {
        return Err(shape_err!(
            "dot of {} input bits with {} weights",
            x.len(),
            w.signs.len()
        ));
    }
    Ok(w.scale * signed_popcount(x, &w.signs) as f64)
}

/// Tensor of `{0,1}` values, bit-packed in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryTensor {
    shape: Shape,
    bits: PackedBits,
}

impl BinaryTensor {
    pub fn new(shape: Shape, bits: PackedBits) -> Result<Self> {
        if bits.len() != shape.numel() {
            return Err(shape_err!("{:?} needs {} bits, got {}", shape.dims(), shape.numel(), bits.len()));
        }
        Ok(BinaryTensor { shape, bits })
    }

    pub fn zeros(shape: Shape) -> Self {
        let bits = PackedBits::zeros(shape.numel());
        BinaryTensor { shape, bits }
    }

    /// Packs a real tensor whose entries must all be exactly 0 or 1.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let shape = Shape::new(t.shape())?;
        let mut bits = PackedBits::zeros(t.len());
        for (i, &v) in t.data().iter().enumerate() {
            if v == 1.0 {
                bits.set(i, true);
            } else if v != 0.0 {
                return Err(invalid!("binary input expected, found {v} at index {i}"));
            }
        }
        Ok(BinaryTensor { shape, bits })
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.bits.iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        Tensor::from_vec(self.shape.dims(), data).expect("shape matches bit count")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bits(&self) -> &PackedBits {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut PackedBits {
        &mut self.bits
    }
}

/// Binary weights `±α`: a sign bitmask (bit set means `+α`) plus one
/// nonnegative scale shared by the whole tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryWeightTensor {
    shape: Vec<usize>,
    signs: PackedBits,
    scale: f64,
}

impl BinaryWeightTensor {
    pub fn new(shape: &[usize], signs: PackedBits, scale: f64) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != signs.len() || n == 0 {
            return Err(shape_err!("weight shape {:?} vs {} sign bits", shape, signs.len()));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(invalid!("weight scale must be finite and nonnegative, got {scale}"));
        }
        Ok(BinaryWeightTensor {
            shape: shape.to_vec(),
            signs,
            scale,
        })
    }

    pub fn from_signs(shape: &[usize], positive: &[bool], scale: f64) -> Result<Self> {
        Self::new(shape, PackedBits::from_bools(positive), scale)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn signs(&self) -> &PackedBits {
        &self.signs
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    #[inline]
    pub fn effective_at(&self, i: usize) -> f64 {
        if self.signs.get(i) {
            self.scale
        } else {
            -self.scale
        }
    }

    /// Dense `±α` view.
    pub fn effective(&self) -> Tensor {
        let data = (0..self.len()).map(|i| self.effective_at(i)).collect();
        Tensor::from_vec(&self.shape, data).expect("shape matches sign count")
    }
}
