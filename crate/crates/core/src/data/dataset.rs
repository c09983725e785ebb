use crate::bitplane::{max_value, Container, FixedTensor, Shape};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Labeled samples of identical shape, stored as M-bit fixed-point values.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedDataset {
    shape: Shape,
    bits: u8,
    values: Vec<u16>,
    labels: Vec<usize>,
    subjects: Vec<u32>,
    num_classes: usize,
}

impl FixedDataset {
    pub fn new(shape: Shape, bits: u8, values: Vec<u16>, labels: Vec<usize>, subjects: Vec<u32>, num_classes: usize) -> Result<Self> {
        let per = shape.numel();
        if values.len() != labels.len() * per || subjects.len() != labels.len() {
            return Err(shape_err!(
                "{} labels and {} subjects do not match {} values of {:?}",
                labels.len(),
                subjects.len(),
                values.len(),
                shape.dims()
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(invalid!("label {l} out of range for {num_classes} classes"));
        }
        if !(1..=crate::bitplane::MAX_BITS).contains(&bits) {
            return Err(invalid!("bit width must be 1..=16, got {bits}"));
        }
        if let Some(&v) = values.iter().find(|&&v| v > max_value(bits)) {
            return Err(invalid!("value {v} exceeds {bits} bits"));
        }
        Ok(FixedDataset {
            shape,
            bits,
            values,
            labels,
            subjects,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn subjects(&self) -> &[u32] {
        &self.subjects
    }

    pub fn sample_values(&self, i: usize) -> &[u16] {
        let per = self.shape.numel();
        &self.values[i * per..(i + 1) * per]
    }

    pub fn sample(&self, i: usize) -> FixedTensor {
        FixedTensor::new(self.shape.clone(), self.bits, self.sample_values(i).to_vec()).expect("validated")
    }

    pub fn subset(&self, idx: &[usize]) -> FixedDataset {
        let mut values = Vec::with_capacity(idx.len() * self.shape.numel());
        for &i in idx {
            values.extend_from_slice(self.sample_values(i));
        }
        FixedDataset {
            shape: self.shape.clone(),
            bits: self.bits,
            values,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subjects: idx.iter().map(|&i| self.subjects[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Inputs as an `N×H×W×C` fixed-point container and labels (and
    /// subjects) as 1-D real containers.
    pub fn to_containers(&self) -> Result<(Container, Container, Container)> {
        let mut dims = vec![self.len()];
        dims.extend_from_slice(self.shape.dims());
        let inputs = Container::Fixed(FixedTensor::new(Shape::new(&dims)?, self.bits, self.values.clone())?);
        let labels = Container::real(&Tensor::from_vec(&[self.len()], self.labels.iter().map(|&l| l as f64).collect())?)?;
        let subjects = Container::real(&Tensor::from_vec(&[self.len()], self.subjects.iter().map(|&s| s as f64).collect())?)?;
        Ok((inputs, labels, subjects))
    }

    /// Inverse of [`FixedDataset::to_containers`]. The class count is one
    /// more than the largest label unless given.
    pub fn from_containers(inputs: &Container, labels: &Container, subjects: Option<&Container>, num_classes: Option<usize>) -> Result<Self> {
        let Container::Fixed(x) = inputs else {
            return Err(invalid!("dataset inputs must be a fixed-point container"));
        };
        let dims = x.shape().dims();
        if dims.len() < 2 {
            return Err(shape_err!("dataset inputs need a leading sample axis, got {:?}", dims));
        }
        let shape = Shape::new(&dims[1..])?;
        let as_ints = |c: &Container, what: &str| -> Result<Vec<u64>> {
            c.to_tensor()
                .data()
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as u64)
                    } else {
                        Err(invalid!("{what} must be nonnegative integers, found {v}"))
                    }
                })
                .collect()
        };
        let labels: Vec<usize> = as_ints(labels, "labels")?.into_iter().map(|v| v as usize).collect();
        let subjects = match subjects {
            Some(s) => as_ints(s, "subjects")?.into_iter().map(|v| v as u32).collect(),
            None => vec![0; labels.len()],
        };
        let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        FixedDataset::new(shape, x.bit_width(), x.values().to_vec(), labels, subjects, k)
    }
}
