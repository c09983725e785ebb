use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

fn nk(logits: &Tensor) -> Result<(usize, usize)> {
    match *logits.shape() {
        [n, k] if n > 0 && k > 0 => Ok((n, k)),
        _ => Err(shape_err!("logits must be N×K, got {:?}", logits.shape())),
    }
}

/// Row-wise softmax, max-shifted.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = nk(logits)?;
    let mut p = logits.clone();
    for row in p.data_mut().chunks_mut(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok(p)
}

/// Mean cross-entropy over the batch; also returns the probabilities.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = nk(logits)?;
    if labels.len() != n {
        return Err(shape_err!("{} labels for {n} rows", labels.len()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(invalid!("label {l} out of range for {k} classes"));
    }
    let probs = softmax(logits)?;
    let loss = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let row = &logits.data()[i * k..(i + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[l]
        })
        .sum::<f64>()
        / n as f64;
    Ok((loss, probs))
}

pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, k) = nk(probs)?;
    let mut g = probs.clone();
    for (i, &l) in labels.iter().enumerate() {
        g.data_mut()[i * k + l] -= 1.0;
    }
    g.data_mut().iter_mut().for_each(|v| *v /= n as f64);
    Ok(g)
}
