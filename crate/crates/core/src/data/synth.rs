use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitplane::{max_value, Shape};
use crate::error::{invalid, Result};

use super::FixedDataset;

/// Two-class synthetic tasks over fixed-point inputs. The bit-level kinds
/// write the class into designated bit planes of channel 0, at every
/// position; all other bits are uniform noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Plane `target_bit` of channel 0 equals the class.
    BitSeparable,
    /// The XOR of planes `parity_bits` of channel 0 equals the class. One
    /// shared weight per value cannot pick this out of the integer; separate
    /// weights per plane can.
    BitParity,
    /// Class 1 samples have a higher mean than class 0, with a margin.
    Linear,
}

impl std::str::FromStr for SynthKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bit_separable" => Ok(SynthKind::BitSeparable),
            "bit_parity" | "parity" => Ok(SynthKind::BitParity),
            "linear" => Ok(SynthKind::Linear),
            _ => Err(invalid!("unknown synthetic kind {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub shape: Shape,
    pub bits: u8,
    pub samples_per_class: usize,
    pub seed: u64,
    /// Defaults to the most significant bit.
    pub target_bit: Option<u8>,
    pub parity_bits: Vec<u8>,
    /// Samples are assigned to subjects round-robin.
    pub subjects: u32,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, shape: Shape, bits: u8, samples_per_class: usize, seed: u64) -> Self {
        SynthSpec {
            kind,
            shape,
            bits,
            samples_per_class,
            seed,
            target_bit: None,
            parity_bits: vec![0, 1],
            subjects: 1,
        }
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<FixedDataset> {
    let bits = spec.bits;
    if !(1..=crate::bitplane::MAX_BITS).contains(&bits) {
        return Err(invalid!("bit width must be 1..=16, got {bits}"));
    }
    if spec.samples_per_class == 0 || spec.subjects == 0 {
        return Err(invalid!("samples per class and subject count must be positive"));
    }
    let target = spec.target_bit.unwrap_or(bits - 1);
    if target >= bits {
        return Err(invalid!("target bit {target} needs more than {bits} bits"));
    }
    if spec.kind == SynthKind::BitParity && (spec.parity_bits.is_empty() || spec.parity_bits.iter().any(|&b| b >= bits)) {
        return Err(invalid!("parity bits {:?} invalid for {bits} bits", spec.parity_bits));
    }
    let per = spec.shape.numel();
    let channels = spec.shape.channels();
    let top = max_value(bits);
    let n = 2 * spec.samples_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(n * per);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let start = values.len();
        match spec.kind {
            SynthKind::BitSeparable | SynthKind::BitParity => {
                values.extend((0..per).map(|_| rng.gen_range(0..=top)));
                for v in values[start..].iter_mut().step_by(channels) {
                    if spec.kind == SynthKind::BitSeparable {
                        *v = (*v & !(1 << target)) | ((class as u16) << target);
                    } else {
                        let parity = spec.parity_bits.iter().fold(0, |p, &b| p ^ ((*v >> b) & 1));
                        if parity as usize != class {
                            *v ^= 1 << spec.parity_bits[0];
                        }
                    }
                }
            }
            SynthKind::Linear => {
                let centre = if class == 1 { rng.gen_range(0.65..0.9) } else { rng.gen_range(0.1..0.35) };
                values.extend((0..per).map(|_| {
                    let x: f64 = centre + rng.gen_range(-0.1..0.1);
                    (x.clamp(0.0, 1.0) * top as f64).round() as u16
                }));
            }
        }
        labels.push(class);
    }
    let subjects = (0..n).map(|i| i as u32 % spec.subjects).collect();
    FixedDataset::new(spec.shape.clone(), bits, values, labels, subjects, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SynthKind) -> SynthSpec {
        SynthSpec::new(kind, Shape::hwc(2, 8, 1).unwrap(), 8, 50, 3)
    }

    #[test]
    fn balanced_and_deterministic() {
        for kind in [SynthKind::BitSeparable, SynthKind::BitParity, SynthKind::Linear] {
            let a = generate_synthetic(&spec(kind)).unwrap();
            assert_eq!(a.len(), 100);
            assert_eq!(a.labels().iter().filter(|&&l| l == 1).count(), 50);
            assert_eq!(a, generate_synthetic(&spec(kind)).unwrap());
        }
    }

    #[test]
    fn labels_follow_rule() {
        let d = generate_synthetic(&spec(SynthKind::BitSeparable)).unwrap();
        for i in 0..d.len() {
            for &v in d.sample_values(i) {
                assert_eq!(((v >> 7) & 1) as usize, d.label(i));
            }
        }
        let d = generate_synthetic(&spec(SynthKind::BitParity)).unwrap();
        for i in 0..d.len() {
            for &v in d.sample_values(i) {
                assert_eq!(((v ^ (v >> 1)) & 1) as usize, d.label(i));
            }
        }
        let d = generate_synthetic(&spec(SynthKind::Linear)).unwrap();
        for i in 0..d.len() {
            let mean = d.sample_values(i).iter().map(|&v| v as f64).sum::<f64>() / 16.0 / 255.0;
            assert_eq!(mean > 0.5, d.label(i) == 1);
        }
    }

    #[test]
    fn only_channel_zero_carries_the_label() {
        let mut s = spec(SynthKind::BitSeparable);
        s.shape = Shape::hwc(1, 4, 3).unwrap();
        let d = generate_synthetic(&s).unwrap();
        let mut noise_ones = 0;
        for i in 0..d.len() {
            for (j, &v) in d.sample_values(i).iter().enumerate() {
                if j % 3 == 0 {
                    assert_eq!(((v >> 7) & 1) as usize, d.label(i));
                } else {
                    noise_ones += (v >> 7) & 1;
                }
            }
        }
        assert!(noise_ones > 0);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("bit-parity".parse::<SynthKind>().unwrap(), SynthKind::BitParity);
        assert!("nope".parse::<SynthKind>().is_err());
    }
}
