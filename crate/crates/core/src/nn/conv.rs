//! Stride-1, same-size 2-D cross-correlation with zero padding.
//!
//! Kernels of size `c` pad `c / 2` rows/columns on the top/left and
//! `(c - 1) / 2` on the bottom/right, so odd kernels are centred and even
//! kernels lean toward the top-left.
//!
//! The input is copied into a zero-padded plane of width `W + c - 1` and the
//! output is accumulated in that same row pitch, which turns every kernel tap
//! into one long contiguous `axpy`. Each output value is still accumulated
//! from zero in `(in_channel, ky, kx)` order with the bias added last, so the
//! result is bit-identical to a plain nested-loop evaluation.

use super::kernels::axpy;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Leading (top/left) padding for a kernel of the given size.
#[inline]
pub fn pad_before(kernel: usize) -> usize {
    kernel / 2
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    in_channels: usize,
    out_channels: usize,
    in_per_group: usize,
    out_per_group: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Row pitch of the padded layout.
    fn pitch(&self) -> usize {
        self.width + self.kw - 1
    }

    fn padded_plane(&self) -> usize {
        (self.height + self.kh - 1) * self.pitch()
    }

    /// Flat length covering every valid output position in the padded pitch.
    fn span(&self) -> usize {
        (self.height - 1) * self.pitch() + self.width
    }

    /// Copies `[C, H, W]` data into a zero-padded `[C, H + kh - 1, pitch]`
    /// layout with the given top/left offsets.
    fn pad<R: Real>(&self, x: &[R], channels: usize, top: usize, left: usize) -> Vec<R> {
        let (pitch, pp) = (self.pitch(), self.padded_plane());
        let mut out = vec![R::zero(); channels * pp];
        for c in 0..channels {
            for y in 0..self.height {
                let src = &x[(c * self.height + y) * self.width..][..self.width];
                out[c * pp + (y + top) * pitch + left..][..self.width].copy_from_slice(src);
            }
        }
        out
    }
}

const BLOCK: usize = 32;

/// Cross-correlates padded planes with `[out, in_per_group, kh, kw]` taps.
/// Output `o` reads input planes `group(o) * in_per_group..`. Every output
/// value is summed from zero in `(in_channel, ky, kx)` order, `BLOCK`
/// positions at a time so the partial sums stay in registers.
fn correlate<R: Real>(
    g: &Geometry,
    x: &[R],
    taps: &[R],
    outputs: usize,
    in_per_group: usize,
    out_per_group: usize,
) -> Vec<R> {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { correlate_avx2(g, x, taps, outputs, in_per_group, out_per_group) };
    }
    correlate_body(g, x, taps, outputs, in_per_group, out_per_group)
}

// Same code compiled with wider vectors. No fused multiply-add is enabled,
// so results match the baseline path bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn correlate_avx2<R: Real>(
    g: &Geometry,
    x: &[R],
    taps: &[R],
    outputs: usize,
    in_per_group: usize,
    out_per_group: usize,
) -> Vec<R> {
    correlate_body(g, x, taps, outputs, in_per_group, out_per_group)
}

#[inline(always)]
fn correlate_body<R: Real>(
    g: &Geometry,
    x: &[R],
    taps: &[R],
    outputs: usize,
    in_per_group: usize,
    out_per_group: usize,
) -> Vec<R> {
    let (h, w, plane) = (g.height, g.width, g.plane());
    let (pitch, pp, span) = (g.pitch(), g.padded_plane(), g.span());
    let k = g.kh * g.kw;
    let offsets: Vec<usize> = (0..g.kh)
        .flat_map(|ky| (0..g.kw).map(move |kx| ky * pitch + kx))
        .collect();
    let mut out = vec![R::zero(); outputs * plane];
    let mut acc = vec![R::zero(); span];
    for o in 0..outputs {
        let first = (o / out_per_group) * in_per_group;
        let planes = &x[first * pp..(first + in_per_group) * pp];
        let wo = &taps[o * in_per_group * k..(o + 1) * in_per_group * k];
        let mut s = 0;
        while s + BLOCK <= span {
            let mut local = [R::zero(); BLOCK];
            for (ci, wc) in wo.chunks_exact(k).enumerate() {
                let base = &planes[ci * pp + s..];
                for (&t, &off) in wc.iter().zip(&offsets) {
                    let src = &base[off..off + BLOCK];
                    for j in 0..BLOCK {
                        local[j] += t * src[j];
                    }
                }
            }
            acc[s..s + BLOCK].copy_from_slice(&local);
            s += BLOCK;
        }
        if s < span {
            let tail = &mut acc[s..];
            tail.fill(R::zero());
            for (ci, wc) in wo.chunks_exact(k).enumerate() {
                let base = &planes[ci * pp + s..];
                for (&t, &off) in wc.iter().zip(&offsets) {
                    axpy(t, &base[off..off + tail.len()], tail);
                }
            }
        }
        let dst = &mut out[o * plane..(o + 1) * plane];
        for y in 0..h {
            dst[y * w..(y + 1) * w].copy_from_slice(&acc[y * pitch..][..w]);
        }
    }
    out
}

fn weight_grads<R: Real>(g: &Geometry, x: &[R], go_p: &[R]) -> Vec<R> {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { weight_grads_avx2(g, x, go_p) };
    }
    weight_grads_body(g, x, go_p)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn weight_grads_avx2<R: Real>(g: &Geometry, x: &[R], go_p: &[R]) -> Vec<R> {
    weight_grads_body(g, x, go_p)
}

// Kept out of line so the vectoriser sees the accumulation loop on its own.
#[inline(never)]
fn pairwise_sum<R: Real>(mut acc: [R; BLOCK]) -> R {
    let mut width = BLOCK;
    while width > 1 {
        width /= 2;
        for j in 0..width {
            acc[j] += acc[j + width];
        }
    }
    acc[0]
}

/// `dW[o, ci, ky, kx]` as a dot product over the padded pitch; filler columns
/// of `go_p` are zero. Each dot keeps `BLOCK` partial sums that are combined
/// pairwise at the end, so the order depends only on the geometry.
#[inline(always)]
fn weight_grads_body<R: Real>(g: &Geometry, x: &[R], go_p: &[R]) -> Vec<R> {
    let (pitch, pp, span) = (g.pitch(), g.padded_plane(), g.span());
    let k = g.kh * g.kw;
    let full = span - span % BLOCK;
    let mut grad_w = vec![R::zero(); g.out_channels * g.in_per_group * k];
    for o in 0..g.out_channels {
        let group = o / g.out_per_group;
        let g_plane = &go_p[o * g.height * pitch..][..span];
        for ci in 0..g.in_per_group {
            let in_plane = &x[(group * g.in_per_group + ci) * pp..][..pp];
            let w_base = (o * g.in_per_group + ci) * k;
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let xs = &in_plane[ky * pitch + kx..][..span];
                    let mut acc = [R::zero(); BLOCK];
                    let mut s = 0;
                    while s < full {
                        let (a, b) = (&g_plane[s..s + BLOCK], &xs[s..s + BLOCK]);
                        for j in 0..BLOCK {
                            acc[j] += a[j] * b[j];
                        }
                        s += BLOCK;
                    }
                    let mut total = pairwise_sum(acc);
                    for j in full..span {
                        total += g_plane[j] * xs[j];
                    }
                    grad_w[w_base + ky * g.kw + kx] = total;
                }
            }
        }
    }
    grad_w
}

fn geometry<R: Real>(
    op: &'static str,
    input: &Tensor<R>,
    weights: &Tensor<R>,
    bias: &Tensor<R>,
    groups: usize,
) -> Result<Geometry> {
    let [c_in, h, w] = match input.shape() {
        &[c, h, w] => [c, h, w],
        s => return Err(Error::shape(op, format!("input must be [C,H,W], got {s:?}"))),
    };
    let [c_out, in_per_group, kh, kw] = match weights.shape() {
        &[o, i, kh, kw] => [o, i, kh, kw],
        s => return Err(Error::shape(op, format!("weights must be [C_out,C_in,c,c], got {s:?}"))),
    };
    if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
        return Err(Error::shape(
            op,
            format!("groups={groups} must divide in_channels={c_in} and out_channels={c_out}"),
        ));
    }
    if in_per_group * groups != c_in {
        return Err(Error::shape(
            op,
            format!("weights in_channels dimension is {in_per_group} but input has {c_in} channels (groups={groups})"),
        ));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape(
            op,
            format!("bias must be [{c_out}] (out_channels), got {:?}", bias.shape()),
        ));
    }
    Ok(Geometry {
        in_channels: c_in,
        out_channels: c_out,
        in_per_group,
        out_per_group: c_out / groups,
        height: h,
        width: w,
        kh,
        kw,
    })
}

pub fn conv2d_forward<R: Real>(input: &Tensor<R>, weights: &Tensor<R>, bias: &Tensor<R>) -> Result<Tensor<R>> {
    conv2d_forward_grouped(input, weights, bias, 1)
}

/// Grouped convolution: group `g` maps input channels
/// `g*C_in/groups..` to output channels `g*C_out/groups..`.
pub fn conv2d_forward_grouped<R: Real>(
    input: &Tensor<R>,
    weights: &Tensor<R>,
    bias: &Tensor<R>,
    groups: usize,
) -> Result<Tensor<R>> {
    let g = geometry("conv2d_forward", input, weights, bias, groups)?;
    let x = g.pad(input.data(), g.in_channels, pad_before(g.kh), pad_before(g.kw));
    let mut out = correlate(&g, &x, weights.data(), g.out_channels, g.in_per_group, g.out_per_group);
    for (o, chunk) in out.chunks_exact_mut(g.plane()).enumerate() {
        let b = bias.data()[o];
        chunk.iter_mut().for_each(|v| *v += b);
    }
    Tensor::new(vec![g.out_channels, g.height, g.width], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<R> {
    pub input: Tensor<R>,
    pub weights: Tensor<R>,
    pub bias: Tensor<R>,
}

pub fn conv2d_backward<R: Real>(input: &Tensor<R>, weights: &Tensor<R>, grad_out: &Tensor<R>) -> Result<ConvGrads<R>> {
    conv2d_backward_grouped(input, weights, grad_out, 1, true)
}

/// Exact gradients of [`conv2d_forward_grouped`]. When `need_input` is false
/// the input gradient is returned as zeros without being computed.
pub fn conv2d_backward_grouped<R: Real>(
    input: &Tensor<R>,
    weights: &Tensor<R>,
    grad_out: &Tensor<R>,
    groups: usize,
    need_input: bool,
) -> Result<ConvGrads<R>> {
    let c_out = weights.shape().first().copied().unwrap_or(0);
    let bias_shape = Tensor::<R>::zeros(&[c_out.max(1)]);
    let g = geometry("conv2d_backward", input, weights, &bias_shape, groups)?;
    let expected = [g.out_channels, g.height, g.width];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("grad_out must be {expected:?}, got {:?}", grad_out.shape()),
        ));
    }
    let (h, w, plane) = (g.height, g.width, g.plane());
    let pitch = g.pitch();
    let k = g.kh * g.kw;
    let x = g.pad(input.data(), g.in_channels, pad_before(g.kh), pad_before(g.kw));
    let wt = weights.data();
    let go = grad_out.data();

    // grad_out in the padded pitch with zero filler columns
    let mut go_p = vec![R::zero(); g.out_channels * h * pitch];
    for o in 0..g.out_channels {
        for y in 0..h {
            go_p[(o * h + y) * pitch..][..w].copy_from_slice(&go[o * plane + y * w..][..w]);
        }
    }

    let grad_bias: Vec<R> = go.chunks_exact(plane).map(|c| c.iter().copied().sum()).collect();
    let grad_w = weight_grads(&g, &x, &go_p);

    let grad_in = if need_input {
        // adjoint: correlate grad_out with the flipped, transposed kernel
        let go_pad = g.pad(
            go,
            g.out_channels,
            g.kh - 1 - pad_before(g.kh),
            g.kw - 1 - pad_before(g.kw),
        );
        let mut flipped = vec![R::zero(); wt.len()];
        for ci in 0..g.in_channels {
            let group = ci / g.in_per_group;
            for (oi, o) in (group * g.out_per_group..(group + 1) * g.out_per_group).enumerate() {
                let src = &wt[(o * g.in_per_group + ci % g.in_per_group) * k..][..k];
                let dst = &mut flipped[(ci * g.out_per_group + oi) * k..][..k];
                for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                    *d = *s;
                }
            }
        }
        correlate(&g, &go_pad, &flipped, g.in_channels, g.out_per_group, g.in_per_group)
    } else {
        vec![R::zero(); g.in_channels * plane]
    };

    Ok(ConvGrads {
        input: Tensor::new(vec![g.in_channels, h, w], grad_in)?,
        weights: Tensor::new(weights.shape().to_vec(), grad_w)?,
        bias: Tensor::new(vec![g.out_channels], grad_bias)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradient, GradCheck};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Independent quadruple-loop evaluation over an explicitly zero-padded input.
    fn oracle(input: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (ci_n, h, wd) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (co_n, c) = (w.shape()[0], w.shape()[2]);
        let (top, bottom) = (c / 2, (c - 1) / 2);
        let (ph, pw) = (h + top + bottom, wd + top + bottom);
        let mut padded = vec![0.0; ci_n * ph * pw];
        for ci in 0..ci_n {
            for y in 0..h {
                for x in 0..wd {
                    padded[ci * ph * pw + (y + top) * pw + x + top] = input.data()[ci * h * wd + y * wd + x];
                }
            }
        }
        let mut out = vec![0.0; co_n * h * wd];
        for o in 0..co_n {
            for y in 0..h {
                for x in 0..wd {
                    let mut acc = 0.0;
                    for ci in 0..ci_n {
                        for ky in 0..c {
                            for kx in 0..c {
                                let p = padded[ci * ph * pw + (y + ky) * pw + x + kx];
                                acc += w.data()[((o * ci_n + ci) * c + ky) * c + kx] * p;
                            }
                        }
                    }
                    out[(o * h + y) * wd + x] = acc + b.data()[o];
                }
            }
        }
        Tensor::new(vec![co_n, h, wd], out).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let input = Tensor::from_fn(&[1, 3, 3], |i| i as f64 * 1.5 - 2.0);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let out = conv2d_forward(&input, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random(&[2, 5, 4], &mut rng);
        let w = Tensor::zeros(&[3, 2, 5, 5]);
        let b = Tensor::new(vec![3], vec![0.5, -1.0, 2.25]).unwrap();
        let out = conv2d_forward(&input, &w, &b).unwrap();
        for o in 0..3 {
            assert!(out.data()[o * 20..(o + 1) * 20].iter().all(|&v| v == b.data()[o]));
        }
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random(&[2, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let out = conv2d_forward(&input, &w, &b).unwrap();
        assert!(out.max_abs_diff(&oracle(&input, &w, &b)).unwrap() < 1e-12);
    }

    #[test]
    fn bit_exact_with_oracle_for_common_kernel_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for c in [1, 2, 3, 4, 5, 9] {
            let input = random(&[4, 16, 16], &mut rng);
            let w = random(&[3, 4, c, c], &mut rng);
            let b = random(&[3], &mut rng);
            let out = conv2d_forward(&input, &w, &b).unwrap();
            assert_eq!(out, oracle(&input, &w, &b), "kernel {c}");
        }
    }

    #[test]
    fn shape_errors_name_the_dimension() {
        let input = Tensor::<f64>::zeros(&[2, 4, 4]);
        let w = Tensor::zeros(&[3, 1, 3, 3]);
        let err = conv2d_forward(&input, &w, &Tensor::zeros(&[3]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("in_channels"), "{err}");
        let w = Tensor::zeros(&[3, 2, 3, 3]);
        let err = conv2d_forward(&input, &w, &Tensor::zeros(&[2]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("out_channels"), "{err}");
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = random(&[2, 6, 6], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let g = conv2d_backward(&input, &w, &Tensor::zeros(&[3, 6, 6])).unwrap();
        assert!(g
            .input
            .data()
            .iter()
            .chain(g.weights.data())
            .chain(g.bias.data())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn bias_grad_is_channel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random(&[1, 4, 4], &mut rng);
        let w = random(&[2, 1, 3, 3], &mut rng);
        let go = random(&[2, 4, 4], &mut rng);
        let g = conv2d_backward(&input, &w, &go).unwrap();
        for o in 0..2 {
            let s: f64 = go.data()[o * 16..(o + 1) * 16].iter().sum();
            assert!((g.bias.data()[o] - s).abs() < 1e-14);
        }
    }

    fn fd_check(groups: usize, c: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ci, co) = (2 * groups, 2 * groups);
        let input = random(&[ci, 5, 6], &mut rng);
        let w = random(&[co, ci / groups, c, c], &mut rng);
        let b = random(&[co], &mut rng);
        let proj = random(&[co, 5, 6], &mut rng);
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            let y = conv2d_forward_grouped(x, w, b, groups).unwrap();
            y.data().iter().zip(proj.data()).map(|(a, p)| a * p).sum()
        };
        let g = conv2d_backward_grouped(&input, &w, &proj, groups, true).unwrap();
        let cfg = GradCheck::default();
        let r = check_gradient(input.data(), g.input.data(), cfg, |v| {
            loss(&Tensor::new(input.shape().to_vec(), v.to_vec()).unwrap(), &w, &b)
        });
        assert!(r.max_rel_error < 1e-6, "input {r:?}");
        let r = check_gradient(w.data(), g.weights.data(), cfg, |v| {
            loss(&input, &Tensor::new(w.shape().to_vec(), v.to_vec()).unwrap(), &b)
        });
        assert!(r.max_rel_error < 1e-6, "weights {r:?}");
        let r = check_gradient(b.data(), g.bias.data(), cfg, |v| {
            loss(&input, &w, &Tensor::new(b.shape().to_vec(), v.to_vec()).unwrap())
        });
        assert!(r.max_rel_error < 1e-6, "bias {r:?}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        fd_check(1, 3, 10);
        fd_check(1, 4, 11);
        fd_check(1, 2, 12);
        fd_check(3, 3, 13);
    }

    #[test]
    fn grouped_conv_equals_per_group_convs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random(&[4, 5, 5], &mut rng);
        let w = random(&[6, 2, 3, 3], &mut rng);
        let b = random(&[6], &mut rng);
        let out = conv2d_forward_grouped(&input, &w, &b, 2).unwrap();
        for g in 0..2 {
            let xi = Tensor::new(vec![2, 5, 5], input.data()[g * 50..(g + 1) * 50].to_vec()).unwrap();
            let wi = Tensor::new(vec![3, 2, 3, 3], w.data()[g * 54..(g + 1) * 54].to_vec()).unwrap();
            let bi = Tensor::new(vec![3], b.data()[g * 3..(g + 1) * 3].to_vec()).unwrap();
            let part = conv2d_forward(&xi, &wi, &bi).unwrap();
            assert_eq!(part.data(), &out.data()[g * 75..(g + 1) * 75]);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn forward_is_affine_in_input(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[2, 7, 6], &mut rng);
            let y = random(&[2, 7, 6], &mut rng);
            let w = random(&[3, 2, k, k], &mut rng);
            let bias = random(&[3], &mut rng);
            let mix = Tensor::from_fn(x.shape(), |i| a * x.data()[i] + b * y.data()[i]);
            let lhs = conv2d_forward(&mix, &w, &bias).unwrap();
            let cx = conv2d_forward(&x, &w, &bias).unwrap();
            let cy = conv2d_forward(&y, &w, &bias).unwrap();
            let plane = 42;
            for (i, v) in lhs.data().iter().enumerate() {
                let bo = bias.data()[i / plane];
                let rhs = a * cx.data()[i] + b * cy.data()[i] - (a + b - 1.0) * bo;
                proptest::prop_assert!((v - rhs).abs() < 1e-10, "{} vs {}", v, rhs);
            }
        }

        #[test]
        fn random_shapes_match_oracle_bit_for_bit(
            seed in 0u64..10_000,
            c_in in 1usize..5,
            c_out in 1usize..4,
            h in 1usize..17,
            w in 1usize..17,
            k in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[c_in, h, w], &mut rng);
            let wt = random(&[c_out, c_in, k, k], &mut rng);
            let b = random(&[c_out], &mut rng);
            let out = conv2d_forward(&x, &wt, &b).unwrap();
            proptest::prop_assert!(out.bit_eq(&oracle(&x, &wt, &b)));
        }
    }
}
