use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

pub struct PoolOutput {
    pub output: Tensor,
    /// Flat input index of the maximum feeding each output element.
    pub argmax: Vec<usize>,
}

/// Non-overlapping max pooling over `N×H×W×C` with a `ph×pw` window;
/// trailing rows and columns that do not fill a window are dropped.
pub fn max_pool(x: &Tensor, window: (usize, usize)) -> Result<PoolOutput> {
    let &[n, h, w, c] = x.shape() else {
        return Err(shape_err!("max pool expects N×H×W×C, got {:?}", x.shape()));
    };
    let (ph, pw) = window;
    if ph == 0 || pw == 0 {
        return Err(invalid!("pool window must be nonzero"));
    }
    if ph > h || pw > w {
        return Err(invalid!("pool window {ph}×{pw} larger than input {h}×{w}"));
    }
    let (oh, ow) = (h / ph, w / pw);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for s in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let i = ((s * h + y * ph + dy) * w + xx * pw + dx) * c + ch;
                            if xd[i] > best {
                                best = xd[i];
                                at = i;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(at);
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_vec(&[n, oh, ow, c], out)?,
        argmax,
    })
}

pub fn max_pool_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(shape_err!("pool gradient has {} values, argmax {}", grad_out.len(), argmax.len()));
    }
    let mut g = Tensor::zeros(input_shape);
    for (&i, &v) in argmax.iter().zip(grad_out.data()) {
        g.data_mut()[i] += v;
    }
    Ok(g)
}
