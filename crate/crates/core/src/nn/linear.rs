//! Fully connected layer on a flattened input.

use super::kernels::{axpy, dot};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn check<R: Real>(op: &'static str, input: &Tensor<R>, weights: &Tensor<R>) -> Result<(usize, usize)> {
    let (m, n) = match weights.shape() {
        &[m, n] => (m, n),
        s => return Err(Error::shape(op, format!("weights must be [out, in], got {s:?}"))),
    };
    if input.len() != n {
        return Err(Error::shape(
            op,
            format!(
                "weights expect {n} inputs (in dimension) but the input has {} values",
                input.len()
            ),
        ));
    }
    Ok((m, n))
}

/// `W x + b` where `x` is the input flattened in row-major (channel-major) order.
pub fn fc_forward<R: Real>(input: &Tensor<R>, weights: &Tensor<R>, bias: &Tensor<R>) -> Result<Tensor<R>> {
    let (m, n) = check("fc_forward", input, weights)?;
    if bias.shape() != [m] {
        return Err(Error::shape(
            "fc_forward",
            format!("bias must be [{m}] (out dimension), got {:?}", bias.shape()),
        ));
    }
    let x = input.data();
    let out = (0..m)
        .map(|i| dot(&weights.data()[i * n..(i + 1) * n], x) + bias.data()[i])
        .collect();
    Tensor::new(vec![m], out)
}

#[derive(Debug, Clone)]
pub struct FcGrads<R> {
    /// Same shape as the forward input.
    pub input: Tensor<R>,
    pub weights: Tensor<R>,
    pub bias: Tensor<R>,
}

pub fn fc_backward<R: Real>(input: &Tensor<R>, weights: &Tensor<R>, grad_out: &Tensor<R>) -> Result<FcGrads<R>> {
    let (m, n) = check("fc_backward", input, weights)?;
    if grad_out.len() != m {
        return Err(Error::shape(
            "fc_backward",
            format!("grad_out must have {m} values (out dimension), got {}", grad_out.len()),
        ));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut grad_in = vec![R::zero(); n];
    let mut grad_w = vec![R::zero(); m * n];
    for i in 0..m {
        let row = &weights.data()[i * n..(i + 1) * n];
        axpy(g[i], row, &mut grad_in);
        grad_w[i * n..(i + 1) * n]
            .iter_mut()
            .zip(x)
            .for_each(|(w, &xv)| *w = g[i] * xv);
    }
    Ok(FcGrads {
        input: Tensor::new(input.shape().to_vec(), grad_in)?,
        weights: Tensor::new(vec![m, n], grad_w)?,
        bias: Tensor::new(vec![m], g.to_vec())?,
    })
}
