//! Define-by-run reverse-mode differentiation over whole tensors.
//!
//! Each forward op appends a node holding its output and whatever the
//! backward rule needs; [`Tape::backward`] walks the nodes in reverse and
//! returns full-precision gradients for every parameter leaf. Quantizer
//! nodes use the straight-through rules from [`crate::quant`].

use std::collections::BTreeMap;

use crate::error::{invalid, shape_err, Result};
use crate::layers::{self, BatchNormCache, ConvSpec};
use crate::par::Execution;
use crate::quant::{self, SteKind};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Reshape(Var),
    Binarize(Var),
    Conv { x: Var, w: Var, spec: ConvSpec },
    Dense { x: Var, w: Var, b: Option<Var> },
    BatchNorm { x: Var, gamma: Var, beta: Var, cache: BatchNormCache },
    /// `quantize_k(clamp(x))`, or only the clamp when `k` is `None`.
    Activation { x: Var, gate: bool },
    MaxPool { x: Var, argmax: Vec<usize> },
    Dropout { x: Var, mask: Tensor },
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    exec: Execution,
}

impl Tape {
    pub fn new(exec: Execution) -> Self {
        Tape { nodes: Vec::new(), exec }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant: receives no gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A trainable leaf identified by `id`.
    pub fn param(&mut self, id: usize, t: Tensor) -> Var {
        self.push(t, Op::Param(id))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        x.same_shape(y)?;
        let v = Tensor::from_vec(x.shape(), x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect())?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// `sign(w)·mean(|w|)` forward, identity backward.
    pub fn binarize(&mut self, w: Var) -> Var {
        let v = quant::binarize_dense(self.value(w));
        self.push(v, Op::Binarize(w))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, spec: ConvSpec) -> Result<Var> {
        let v = layers::conv2d_forward(self.exec, self.value(x), self.value(w), &spec)?;
        Ok(self.push(v, Op::Conv { x, w, spec }))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let v = layers::fully_connected(self.exec, self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(v, Op::Dense { x, w, b }))
    }

    /// Training-mode batch norm; the batch statistics are kept for the
    /// running-average update, see [`Tape::batch_stats`].
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (v, cache) = layers::norm_train(self.value(x), self.value(gamma).data(), self.value(beta).data(), eps)?;
        Ok(self.push(v, Op::BatchNorm { x, gamma, beta, cache }))
    }

    pub fn batch_stats(&self, v: Var) -> Option<&BatchNormCache> {
        match &self.nodes[v.0].op {
            Op::BatchNorm { cache, .. } => Some(cache),
            _ => None,
        }
    }

    /// Bounded activation, optionally followed by `k`-bit quantization.
    /// `gate` selects the clip-gated straight-through gradient.
    pub fn activation(&mut self, x: Var, k: Option<u32>, gate: bool) -> Result<Var> {
        let v = match k {
            Some(k) => quant::quantize_k(&quant::bounded_activation(self.value(x)), k)?,
            None => quant::bounded_activation(self.value(x)),
        };
        Ok(self.push(v, Op::Activation { x, gate }))
    }

    pub fn max_pool(&mut self, x: Var, window: (usize, usize)) -> Result<Var> {
        let p = layers::max_pool(self.value(x), window)?;
        Ok(self.push(p.output, Op::MaxPool { x, argmax: p.argmax }))
    }

    pub fn dropout<R: rand::Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        let (v, mask) = layers::dropout(self.value(x), rate, rng)?;
        Ok(self.push(v, Op::Dropout { x, mask }))
    }

    /// Mean softmax cross-entropy; the result is a scalar node.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = layers::softmax_cross_entropy(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(invalid!("backward needs a scalar loss, got shape {:?}", self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        let mut params: BTreeMap<usize, Tensor> = BTreeMap::new();

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => match params.get_mut(id) {
                    Some(t) => t.add_assign(&g)?,
                    None => {
                        params.insert(*id, g);
                    }
                },
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone())?;
                    acc(&mut grads, *b, g)?;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = Tensor::from_vec(va.shape(), g.data().iter().zip(vb.data()).map(|(p, q)| p * q).collect())?;
                    let gb = Tensor::from_vec(vb.shape(), g.data().iter().zip(va.data()).map(|(p, q)| p * q).collect())?;
                    acc(&mut grads, *a, ga)?;
                    acc(&mut grads, *b, gb)?;
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    acc(&mut grads, *a, Tensor::full(self.value(*a).shape(), s))?;
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    acc(&mut grads, *a, g.reshape(&shape)?)?;
                }
                Op::Binarize(w) => {
                    let gw = quant::ste_backward(&g, self.value(*w), SteKind::WeightSign)?;
                    acc(&mut grads, *w, gw)?;
                }
                Op::Conv { x, w, spec } => {
                    let xv = self.value(*x);
                    let in_c = *xv.shape().last().ok_or_else(|| shape_err!("conv input rank"))?;
                    let gx = layers::conv2d_backward_input(self.exec, &g, self.value(*w), spec, in_c)?;
                    let gw = layers::conv2d_backward_weights(self.exec, xv, &g, spec)?;
                    acc(&mut grads, *x, gx)?;
                    acc(&mut grads, *w, gw)?;
                }
                Op::Dense { x, w, b } => {
                    let xv = self.value(*x);
                    let gx = layers::dense_backward_input(self.exec, &g, self.value(*w), xv.shape())?;
                    let gw = layers::dense_backward_weights(self.exec, xv, &g)?;
                    if let Some(b) = b {
                        let u = self.value(*b).len();
                        let mut gb = vec![0.0; u];
                        for row in g.data().chunks(u) {
                            for (a, v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        acc(&mut grads, *b, Tensor::from_vec(&[u], gb)?)?;
                    }
                    acc(&mut grads, *x, gx)?;
                    acc(&mut grads, *w, gw)?;
                }
                Op::BatchNorm { x, gamma, beta, cache } => {
                    let gv = self.value(*gamma);
                    let (gx, dgamma, dbeta) = layers::batch_norm_backward(&g, cache, gv.data())?;
                    let c = gv.len();
                    acc(&mut grads, *x, gx)?;
                    acc(&mut grads, *gamma, Tensor::from_vec(&[c], dgamma)?)?;
                    acc(&mut grads, *beta, Tensor::from_vec(&[c], dbeta)?)?;
                }
                Op::Activation { x, gate, .. } => {
                    let xv = self.value(*x);
                    let gx = if *gate {
                        quant::ste_backward(&g, xv, SteKind::ActivationQuant)?
                    } else {
                        g
                    };
                    acc(&mut grads, *x, gx)?;
                }
                Op::MaxPool { x, argmax } => {
                    let gx = layers::max_pool_backward(&g, argmax, self.value(*x).shape())?;
                    acc(&mut grads, *x, gx)?;
                }
                Op::Dropout { x, mask } => {
                    acc(&mut grads, *x, layers::dropout_backward(&g, mask)?)?;
                }
                Op::SoftmaxCe { logits, labels, probs } => {
                    let s = g.data()[0];
                    let mut gl = layers::softmax_cross_entropy_backward(probs, labels)?;
                    if s != 1.0 {
                        gl.data_mut().iter_mut().for_each(|v| *v *= s);
                    }
                    acc(&mut grads, *logits, gl)?;
                }
            }
        }
        Ok(Gradients { params })
    }
}

/// Parameter gradients from one backward pass, keyed by parameter id.
#[derive(Debug, Default)]
pub struct Gradients {
    params: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: usize) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient for `id`, or zeros of `shape` (with a warning) when the
    /// parameter did not feed the loss.
    pub fn param_or_zero(&self, id: usize, shape: &[usize]) -> Tensor {
        match self.params.get(&id) {
            Some(g) => g.clone(),
            None => {
                log::warn!("parameter {id} is disconnected from the loss; using a zero gradient");
                Tensor::zeros(shape)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_node_gradient() {
        let mut t = Tape::new(Execution::Sequential);
        let w = t.param(0, Tensor::scalar(2.0));
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(w, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(0).unwrap().data(), &[3.0]);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut t = Tape::new(Execution::Sequential);
        let w = t.param(0, Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap());
        let y = t.mul(w, w).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(0).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn disconnected_param_gets_zero() {
        let mut t = Tape::new(Execution::Sequential);
        let a = t.param(0, Tensor::scalar(1.0));
        let _b = t.param(1, Tensor::scalar(5.0));
        let s = t.sum(a);
        let g = t.backward(s).unwrap();
        assert!(g.get(1).is_none());
        assert_eq!(g.param_or_zero(1, &[1]).data(), &[0.0]);
    }

    #[test]
    fn activation_gate() {
        let mut t = Tape::new(Execution::Sequential);
        let x = t.param(0, Tensor::from_vec(&[3], vec![-0.5, 0.4, 1.5]).unwrap());
        let a = t.activation(x, Some(1), true).unwrap();
        assert_eq!(t.value(a).data(), &[0.0, 0.0, 1.0]);
        let s = t.sum(a);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(0).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn binarize_is_straight_through() {
        let mut t = Tape::new(Execution::Sequential);
        let w = t.param(0, Tensor::from_vec(&[2], vec![0.5, -1.5]).unwrap());
        let b = t.binarize(w);
        assert_eq!(t.value(b).data(), &[1.0, -1.0]);
        let c = t.leaf(Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let y = t.mul(b, c).unwrap();
        let s = t.sum(y);
        assert_eq!(t.backward(s).unwrap().get(0).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new(Execution::Sequential);
        let a = t.param(0, Tensor::zeros(&[2]));
        assert!(t.backward(a).is_err());
    }
}
