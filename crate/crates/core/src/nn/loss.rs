use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Numerically stable softmax.
pub fn softmax<R: Real>(logits: &[R]) -> Vec<R> {
    let max = logits.iter().copied().fold(R::neg_infinity(), R::max);
    let exps: Vec<R> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: R = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against a class index. Returns the loss and
/// its gradient `softmax(logits) - one_hot(label)`.
pub fn softmax_cross_entropy<R: Real>(logits: &Tensor<R>, label: usize) -> Result<(R, Tensor<R>)> {
    let n = logits.len();
    if label >= n {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {n} classes"
        )));
    }
    let max = logits.data().iter().copied().fold(R::neg_infinity(), R::max);
    let shifted: Vec<R> = logits.data().iter().map(|&v| v - max).collect();
    let sum: R = shifted.iter().map(|v| v.exp()).sum();
    let log_sum = sum.ln();
    let loss = log_sum - shifted[label];
    let mut grad: Vec<R> = shifted.iter().map(|&v| (v - log_sum).exp()).collect();
    grad[label] -= R::one();
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Mean squared error over all elements; gradient `2 (pred - target) / N`.
pub fn mse_loss<R: Real>(pred: &Tensor<R>, target: &Tensor<R>) -> Result<(R, Tensor<R>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse_loss",
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let n = R::from_usize(pred.len());
    let two = R::from_f64(2.0);
    let mut loss = R::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        loss += d * d;
        grad.push(two * d / n);
    }
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}
