use super::ConvSpec;
use crate::error::{shape_err, Result};
use crate::par::{self, Execution};
use crate::tensor::Tensor;

pub struct ReferenceConv {
    pub output: Tensor,
    /// Multiplications performed, padded taps included.
    pub mults: u64,
}

fn check_weights(in_c: usize, weights: &Tensor, spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    let want = spec.weight_shape(in_c);
    if weights.shape() != want {
        return Err(shape_err!("conv weights {:?}, expected {:?}", weights.shape(), want));
    }
    Ok(())
}

/// Direct convolution of one `H×W×C` input: materializes the zero-padded
/// input and multiplies every tap, counting each multiplication.
pub fn conv2d_reference(input: &Tensor, weights: &Tensor, spec: &ConvSpec) -> Result<ReferenceConv> {
    let &[h, w, c] = input.shape() else {
        return Err(shape_err!("reference conv expects H×W×C, got {:?}", input.shape()));
    };
    check_weights(c, weights, spec)?;
    let (kh, kw) = spec.kernel;
    let (pt, pl) = spec.padding();
    let (hp, wp) = (h + kh - 1, w + kw - 1);
    let mut padded = vec![0.0; hp * wp * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                padded[((y + pt) * wp + x + pl) * c + ch] = input.data()[(y * w + x) * c + ch];
            }
        }
    }
    let nf = spec.filters;
    let wd = weights.data();
    let mut out = vec![0.0; h * w * nf];
    let mut mults = 0u64;
    for y in 0..h {
        for x in 0..w {
            for f in 0..nf {
                let mut acc = 0.0;
                for dy in 0..kh {
                    for dx in 0..kw {
                        for ch in 0..c {
                            let xv = padded[((y + dy) * wp + x + dx) * c + ch];
                            let wv = wd[((dy * kw + dx) * c + ch) * nf + f];
                            acc += xv * wv;
                            mults += 1;
                        }
                    }
                }
                out[(y * w + x) * nf + f] = acc;
            }
        }
    }
    Ok(ReferenceConv {
        output: Tensor::from_vec(&[h, w, nf], out)?,
        mults,
    })
}

fn nhwc(t: &Tensor) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, h, w, c] => Ok([n, h, w, c]),
        _ => Err(shape_err!("expected N×H×W×C, got {:?}", t.shape())),
    }
}

/// Batched same-padding convolution, parallel over samples.
pub fn conv2d_forward(exec: Execution, input: &Tensor, weights: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let [n, h, w, c] = nhwc(input)?;
    check_weights(c, weights, spec)?;
    let (kh, kw) = spec.kernel;
    let (pt, pl) = spec.padding();
    let nf = spec.filters;
    let wd = weights.data();
    let xd = input.data();
    let mut out = Tensor::zeros(&[n, h, w, nf]);
    par::for_each_chunk_mut(exec, out.data_mut(), h * w * nf, |s, o| {
        let xs = &xd[s * h * w * c..(s + 1) * h * w * c];
        for y in 0..h {
            for x in 0..w {
                let acc = &mut o[(y * w + x) * nf..(y * w + x + 1) * nf];
                for dy in 0..kh {
                    let Some(yy) = (y + dy).checked_sub(pt).filter(|&v| v < h) else {
                        continue;
                    };
                    for dx in 0..kw {
                        let Some(xx) = (x + dx).checked_sub(pl).filter(|&v| v < w) else {
                            continue;
                        };
                        let px = &xs[(yy * w + xx) * c..(yy * w + xx + 1) * c];
                        for (ch, &v) in px.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            let row = &wd[((dy * kw + dx) * c + ch) * nf..][..nf];
                            for (a, &wv) in acc.iter_mut().zip(row) {
                                *a += v * wv;
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradient with respect to the input of [`conv2d_forward`].
pub fn conv2d_backward_input(exec: Execution, grad_out: &Tensor, weights: &Tensor, spec: &ConvSpec, in_channels: usize) -> Result<Tensor> {
    let [n, h, w, nf] = nhwc(grad_out)?;
    check_weights(in_channels, weights, spec)?;
    let c = in_channels;
    let (kh, kw) = spec.kernel;
    let (pt, pl) = spec.padding();
    let wd = weights.data();
    let gd = grad_out.data();
    let mut gin = Tensor::zeros(&[n, h, w, c]);
    par::for_each_chunk_mut(exec, gin.data_mut(), h * w * c, |s, gi| {
        let gs = &gd[s * h * w * nf..(s + 1) * h * w * nf];
        for y in 0..h {
            for x in 0..w {
                let g = &gs[(y * w + x) * nf..(y * w + x + 1) * nf];
                for dy in 0..kh {
                    let Some(yy) = (y + dy).checked_sub(pt).filter(|&v| v < h) else {
                        continue;
                    };
                    for dx in 0..kw {
                        let Some(xx) = (x + dx).checked_sub(pl).filter(|&v| v < w) else {
                            continue;
                        };
                        for ch in 0..c {
                            let row = &wd[((dy * kw + dx) * c + ch) * nf..][..nf];
                            let dot: f64 = row.iter().zip(g).map(|(a, b)| a * b).sum();
                            gi[(yy * w + xx) * c + ch] += dot;
                        }
                    }
                }
            }
        }
    });
    Ok(gin)
}

/// Gradient with respect to the weights of [`conv2d_forward`]. Each weight
/// row `(dy, dx, c)` is owned by one task and summed in sample order.
pub fn conv2d_backward_weights(exec: Execution, input: &Tensor, grad_out: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let [n, h, w, c] = nhwc(input)?;
    let [gn, gh, gw_, nf] = nhwc(grad_out)?;
    if (gn, gh, gw_, nf) != (n, h, w, spec.filters) {
        return Err(shape_err!("grad {:?} does not match conv output", grad_out.shape()));
    }
    let kw = spec.kernel.1;
    let (pt, pl) = spec.padding();
    let xd = input.data();
    let gd = grad_out.data();
    let mut gwt = Tensor::zeros(&spec.weight_shape(c));
    par::for_each_chunk_mut(exec, gwt.data_mut(), nf, |r, row| {
        let ch = r % c;
        let tap = r / c;
        let (dy, dx) = (tap / kw, tap % kw);
        for s in 0..n {
            for y in 0..h {
                let Some(yy) = (y + dy).checked_sub(pt).filter(|&v| v < h) else {
                    continue;
                };
                for x in 0..w {
                    let Some(xx) = (x + dx).checked_sub(pl).filter(|&v| v < w) else {
                        continue;
                    };
                    let v = xd[((s * h + yy) * w + xx) * c + ch];
                    if v == 0.0 {
                        continue;
                    }
                    let g = &gd[((s * h + y) * w + x) * nf..][..nf];
                    for (a, &gv) in row.iter_mut().zip(g) {
                        *a += v * gv;
                    }
                }
            }
        }
    });
    Ok(gwt)
}
