//! `BNT1` tensor container.
//!
//! Layout: magic `"BNT1"`, `u8` rank, `rank × u32` little-endian dims,
//! `u8` dtype code, then the row-major payload:
//!
//! | code | meaning        | extra header | payload                                   |
//! |------|----------------|--------------|-------------------------------------------|
//! | 0    | 32-bit real    | –            | `f32` LE per value                        |
//! | 1    | fixed point    | `u8` M       | `u8` per value if M ≤ 8, else `u16` LE    |
//! | 2    | packed planes  | `u8` M       | `u64` LE words of the `c·M+m` bit layout  |
//!
//! For code 2 the dims are the base shape (`H×W×C`), not the plane shape.
//! Decoding is strict (no trailing bytes, padding bits zero, values below
//! `2^M`), so decode followed by encode reproduces the input exactly.

use std::fs;
use std::path::Path;

use super::{BinaryTensor, BitPlaneTensor, FixedTensor, PackedBits, Shape, MAX_RANK};
use crate::error::Result;
use crate::tensor::Tensor;
use crate::Error;

const MAGIC: &[u8; 4] = b"BNT1";

#[derive(Clone, Debug, PartialEq)]
pub enum Container {
    Real { shape: Shape, data: Vec<f32> },
    Fixed(FixedTensor),
    Bits(BitPlaneTensor),
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Container {
    pub fn real(t: &Tensor) -> Result<Self> {
        Ok(Container::Real {
            shape: Shape::new(t.shape())?,
            data: t.data().iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn shape(&self) -> &Shape {
        match self {
            Container::Real { shape, .. } => shape,
            Container::Fixed(t) => t.shape(),
            Container::Bits(b) => b.base_shape(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let dims = self.shape().dims();
        out.push(dims.len() as u8);
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match self {
            Container::Real { data, .. } => {
                out.push(0);
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Container::Fixed(t) => {
                out.push(1);
                out.push(t.bit_width());
                for &v in t.values() {
                    if t.bit_width() <= 8 {
                        out.push(v as u8);
                    } else {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            Container::Bits(b) => {
                out.push(2);
                out.push(b.bit_width());
                for w in b.as_binary().bits().words() {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("missing BNT1 magic"));
        }
        let rank = r.u8()? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(bad(format!("rank {rank} out of range")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let shape = Shape::new(&dims).map_err(|e| bad(e.to_string()))?;
        let n = shape.numel();
        let out = match r.u8()? {
            0 => {
                let bytes = r.take(n.checked_mul(4).ok_or_else(|| bad("size overflow"))?)?;
                let data = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Container::Real { shape, data }
            }
            1 => {
                let m = r.u8()?;
                let values: Vec<u16> = if m <= 8 {
                    r.take(n)?.iter().map(|&b| b as u16).collect()
                } else {
                    r.take(n.checked_mul(2).ok_or_else(|| bad("size overflow"))?)?
                        .chunks_exact(2)
                        .map(|c| u16::from_le_bytes([c[0], c[1]]))
                        .collect()
                };
                Container::Fixed(FixedTensor::new(shape, m, values).map_err(|e| bad(e.to_string()))?)
            }
            2 => {
                let m = r.u8()?;
                if !(1..=super::MAX_BITS).contains(&m) {
                    return Err(bad(format!("bit width {m} out of range")));
                }
                let plane_shape = shape
                    .with_channels(shape.channels() * m as usize)
                    .map_err(|e| bad(e.to_string()))?;
                let nbits = plane_shape.numel();
                let nwords = nbits.div_ceil(64);
                let words: Vec<u64> = r
                    .take(nwords.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                let raw_last = words.last().copied();
                let bits = PackedBits::from_words(words, nbits)?;
                if raw_last != bits.words().last().copied() {
                    return Err(bad("nonzero padding bits"));
                }
                let planes = BinaryTensor::new(plane_shape, bits)?;
                Container::Bits(BitPlaneTensor::from_planes(shape, m, planes)?)
            }
            code => return Err(bad(format!("unknown dtype code {code}"))),
        };
        if r.pos != buf.len() {
            return Err(bad(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(out)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    /// Real-valued view of the payload (fixed values are not normalized,
    /// bit planes are unpacked to `{0,1}`).
    pub fn to_tensor(&self) -> Tensor {
        match self {
            Container::Real { shape, data } => {
                Tensor::from_vec(shape.dims(), data.iter().map(|&v| v as f64).collect()).expect("shape matches")
            }
            Container::Fixed(t) => t.to_tensor(),
            Container::Bits(b) => b.as_binary().to_tensor(),
        }
    }
}
