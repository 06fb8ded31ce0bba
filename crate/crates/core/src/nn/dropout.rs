use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. In training mode each element is kept with probability
/// `1 - rate` and scaled by `1 / (1 - rate)`; evaluation mode is the identity.
/// The returned mask holds the per-element multiplier.
pub fn dropout_forward<R: Real, G: Rng + ?Sized>(
    x: &Tensor<R>,
    rate: f64,
    mode: Mode,
    rng: &mut G,
) -> Result<(Tensor<R>, Tensor<R>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), Tensor::full(x.shape(), R::one())));
    }
    let keep = R::from_f64(1.0 / (1.0 - rate));
    let mask = Tensor::from_fn(x.shape(), |_| if rng.gen::<f64>() < rate { R::zero() } else { keep });
    let y = Tensor::new(
        x.shape().to_vec(),
        x.data().iter().zip(mask.data()).map(|(&v, &m)| v * m).collect(),
    )?;
    Ok((y, mask))
}

pub fn dropout_backward<R: Real>(mask: &Tensor<R>, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
    if mask.shape() != grad_out.shape() {
        return Err(Error::shape(
            "dropout_backward",
            format!("mask {:?} vs grad_out {:?}", mask.shape(), grad_out.shape()),
        ));
    }
    Tensor::new(
        mask.shape().to_vec(),
        mask.data().iter().zip(grad_out.data()).map(|(&m, &g)| m * g).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rate_zero_and_eval_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_fn(&[10], |i| i as f64 - 4.5);
        assert_eq!(dropout_forward(&x, 0.0, Mode::Train, &mut rng).unwrap().0, x);
        assert_eq!(dropout_forward(&x, 0.5, Mode::Eval, &mut rng).unwrap().0, x);
    }

    #[test]
    fn expectation_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::new(vec![4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let trials = 100_000;
        let mut sum = [0.0; 4];
        for _ in 0..trials {
            let (y, _) = dropout_forward(&x, 0.5, Mode::Train, &mut rng).unwrap();
            for (s, v) in sum.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for (s, &v) in sum.iter().zip(x.data()) {
            let mean = s / trials as f64;
            assert!((mean - v).abs() <= 0.02 * v.abs(), "mean {mean} vs {v}");
        }
    }

    #[test]
    fn backward_applies_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::full(&[50], 1.0f64);
        let (y, mask) = dropout_forward(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let g = dropout_backward(&mask, &Tensor::full(&[50], 1.0)).unwrap();
        assert_eq!(g, y);
        assert!(mask.data().iter().all(|&m| m == 0.0 || m == 2.0));
    }

    #[test]
    fn invalid_rate_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(dropout_forward(&Tensor::<f64>::zeros(&[2]), 1.0, Mode::Train, &mut rng).is_err());
    }
}
