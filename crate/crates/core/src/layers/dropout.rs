use rand::Rng;

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Inverted dropout: kept units are scaled by `1/(1−rate)`. Returns the
/// output and the mask (0 or the scale) for the backward pass.
pub fn dropout<R: Rng>(x: &Tensor, rate: f64, rng: &mut R) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid!("dropout rate must be in [0, 1), got {rate}"));
    }
    let keep = 1.0 / (1.0 - rate);
    let m = (0..x.len()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    let mask = Tensor::from_vec(x.shape(), m)?;
    let out = Tensor::from_vec(x.shape(), x.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect())?;
    Ok((out, mask))
}

pub fn dropout_backward(grad_out: &Tensor, mask: &Tensor) -> Result<Tensor> {
    grad_out.same_shape(mask)?;
    Tensor::from_vec(grad_out.shape(), grad_out.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeded_and_scaled() {
        let x = Tensor::full(&[1000], 1.0);
        let (a, ma) = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (b, _) = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(ma.data().iter().all(|&m| m == 0.0 || m == 2.0));
        let kept = ma.data().iter().filter(|&&m| m > 0.0).count();
        assert!((400..600).contains(&kept));
    }

    #[test]
    fn rate_zero_is_identity() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let (y, _) = dropout(&x, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(y, x);
        assert!(dropout(&x, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
