//! Inner loops shared by the layer kernels.

use crate::tensor::Real;

/// `y += a * x`. Each lane is independent, so the compiler vectorises it
/// without changing any result.
#[inline(always)]
pub fn axpy<R: Real>(a: R, x: &[R], y: &mut [R]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

const LANES: usize = 16;

/// Dot product with `LANES` fixed accumulators. The reduction order depends
/// only on the slice length.
#[inline(always)]
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let full = n - n % LANES;
    let mut acc = [R::zero(); LANES];
    let mut i = 0;
    while i < full {
        let (xa, xb) = (&a[i..i + LANES], &b[i..i + LANES]);
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
        i += LANES;
    }
    let mut s = pairwise_sum(acc);
    for (&x, &y) in a[full..n].iter().zip(&b[full..n]) {
        s += x * y;
    }
    s
}

// Out of line so the vectoriser sees the accumulation loop on its own.
#[inline(never)]
fn pairwise_sum<R: Real>(mut acc: [R; LANES]) -> R {
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    acc[0]
}
