use crate::error::{shape_err, Result};
use crate::par::{self, Execution};
use crate::tensor::Tensor;

fn rows(x: &Tensor) -> Result<(usize, usize)> {
    let n = *x.shape().first().ok_or_else(|| shape_err!("empty shape"))?;
    if n == 0 {
        return Err(shape_err!("empty batch"));
    }
    Ok((n, x.len() / n))
}

/// `y = x·W (+ b)` with `x` flattened to `N×D`, `W` of shape `D×U`.
pub fn fully_connected(exec: Execution, x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n, d) = rows(x)?;
    let &[wd, u] = w.shape() else {
        return Err(shape_err!("dense weights must be D×U, got {:?}", w.shape()));
    };
    if wd != d {
        return Err(shape_err!("dense input has {d} features, weights expect {wd}"));
    }
    if let Some(b) = bias {
        if b.shape() != [u] {
            return Err(shape_err!("bias {:?}, expected [{u}]", b.shape()));
        }
    }
    let xd = x.data();
    let wdat = w.data();
    let mut out = Tensor::zeros(&[n, u]);
    par::for_each_chunk_mut(exec, out.data_mut(), u, |s, o| {
        if let Some(b) = bias {
            o.copy_from_slice(b.data());
        }
        for (i, &v) in xd[s * d..(s + 1) * d].iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (a, &wv) in o.iter_mut().zip(&wdat[i * u..(i + 1) * u]) {
                *a += v * wv;
            }
        }
    });
    Ok(out)
}

pub fn dense_backward_input(exec: Execution, grad_out: &Tensor, w: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let &[d, u] = w.shape() else {
        return Err(shape_err!("dense weights must be D×U"));
    };
    let n = grad_out.len() / u;
    let gd = grad_out.data();
    let wdat = w.data();
    let mut gx = Tensor::zeros(input_shape);
    if gx.len() != n * d {
        return Err(shape_err!("input shape {:?} does not match {n}×{d}", input_shape));
    }
    par::for_each_chunk_mut(exec, gx.data_mut(), d, |s, gi| {
        let g = &gd[s * u..(s + 1) * u];
        for (i, v) in gi.iter_mut().enumerate() {
            *v = wdat[i * u..(i + 1) * u].iter().zip(g).map(|(a, b)| a * b).sum();
        }
    });
    Ok(gx)
}

/// `xᵀ·g`; each weight row is reduced over samples in order by one task.
pub fn dense_backward_weights(exec: Execution, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (n, d) = rows(x)?;
    let u = grad_out.len() / n;
    let xd = x.data();
    let gd = grad_out.data();
    let mut gw = Tensor::zeros(&[d, u]);
    par::for_each_chunk_mut(exec, gw.data_mut(), u, |i, row| {
        for s in 0..n {
            let v = xd[s * d + i];
            if v == 0.0 {
                continue;
            }
            for (a, &g) in row.iter_mut().zip(&gd[s * u..(s + 1) * u]) {
                *a += v * g;
            }
        }
    });
    Ok(gw)
}
