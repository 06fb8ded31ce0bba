use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu_forward<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    x.map(|v| if v > R::zero() { v } else { R::zero() })
}

/// Gradient is passed through where the forward input was strictly positive;
/// the subgradient at exactly zero is zero.
pub fn relu_backward<R: Real>(x: &Tensor<R>, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("input {:?} vs grad_out {:?}", x.shape(), grad_out.shape()),
        ));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > R::zero() { g } else { R::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradient, GradCheck};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn negative_input_is_zeroed_and_positive_passes() {
        let neg = Tensor::new(vec![3], vec![-1.0, -0.5, -3.0]).unwrap();
        assert!(relu_forward(&neg).data().iter().all(|&v| v == 0.0));
        let pos = Tensor::new(vec![3], vec![1.0, 0.5, 3.0]).unwrap();
        assert_eq!(relu_forward(&pos), pos);
    }

    #[test]
    fn subgradient_at_zero_is_zero() {
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        let g = relu_backward(&x, &Tensor::new(vec![1], vec![5.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0]);
    }

    #[test]
    fn backward_matches_finite_differences_away_from_kinks() {
        let cfg = GradCheck::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs = Vec::new();
        while xs.len() < 40 {
            let v: f64 = rng.gen_range(-2.0..2.0);
            if v.abs() > 10.0 * cfg.epsilon {
                xs.push(v);
            }
        }
        let x = Tensor::new(vec![40], xs).unwrap();
        let proj = Tensor::from_fn(&[40], |_| rng.gen_range(-1.0..1.0));
        let g = relu_backward(&x, &proj).unwrap();
        let r = check_gradient(x.data(), g.data(), cfg, |v| {
            relu_forward(&Tensor::new(vec![40], v.to_vec()).unwrap())
                .data()
                .iter()
                .zip(proj.data())
                .map(|(a, b)| a * b)
                .sum()
        });
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}
