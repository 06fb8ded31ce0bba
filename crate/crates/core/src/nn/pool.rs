use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Output of a 2x2 max pool: the pooled map plus, for every output value, the
/// flat index of the input element it came from.
#[derive(Debug, Clone)]
pub struct Pooled<R> {
    pub output: Tensor<R>,
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
}

/// Non-overlapping 2x2 max pooling on `[C,H,W]`. Ties go to the first element
/// in row-major window order.
pub fn maxpool2x2_forward<R: Real>(input: &Tensor<R>) -> Result<Pooled<R>> {
    let (c, h, w) = match input.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(Error::shape("maxpool2x2", format!("input must be [C,H,W], got {s:?}"))),
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2x2",
            format!("spatial dimensions must be even, got height {h} width {w}"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let base = ch * h * w + 2 * y * w + 2 * xo;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![c, oh, ow], out)?,
        argmax,
        input_shape: input.shape().to_vec(),
    })
}

pub fn maxpool2x2_backward<R: Real>(
    argmax: &[usize],
    input_shape: &[usize],
    grad_out: &Tensor<R>,
) -> Result<Tensor<R>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape(
            "maxpool2x2_backward",
            format!("{} indices for {} gradient values", argmax.len(), grad_out.len()),
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Ok(grad)
}
