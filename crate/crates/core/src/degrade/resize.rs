//! Bicubic resampling (Keys kernel, a = -0.5) with edge replication.

use super::image::Image;
use crate::error::{Error, Result};

pub const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel.
#[inline]
pub fn keys_kernel(t: f64) -> f64 {
    let a = KEYS_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps and weights for every output coordinate along one axis.
/// Pixel centres are aligned: `src = (dst + 0.5) * in / out - 0.5`.
fn taps(input: usize, output: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let pos = base + k as f64 - 1.0;
                idx[k] = pos.clamp(0.0, (input - 1) as f64) as usize;
                w[k] = keys_kernel(src - pos);
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic resize without clamping the result to the pixel range.
pub fn bicubic_resize_unclamped(img: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "bicubic resize target must be at least 1x1, got {target_h}x{target_w}"
        )));
    }
    let (c, h, w) = (img.channels, img.height, img.width);
    let tx = taps(w, target_w);
    let ty = taps(h, target_h);

    let mut horizontal = vec![0.0; c * h * target_w];
    for ch in 0..c {
        for y in 0..h {
            let row = &img.data[(ch * h + y) * w..][..w];
            let out = &mut horizontal[(ch * h + y) * target_w..][..target_w];
            for (o, (idx, wt)) in out.iter_mut().zip(&tx) {
                *o = wt[0] * row[idx[0]] + wt[1] * row[idx[1]] + wt[2] * row[idx[2]] + wt[3] * row[idx[3]];
            }
        }
    }

    let mut out = vec![0.0; c * target_h * target_w];
    for ch in 0..c {
        let src = &horizontal[ch * h * target_w..][..h * target_w];
        for (oy, (idx, wt)) in ty.iter().enumerate() {
            let dst = &mut out[(ch * target_h + oy) * target_w..][..target_w];
            for (x, d) in dst.iter_mut().enumerate() {
                *d = wt[0] * src[idx[0] * target_w + x]
                    + wt[1] * src[idx[1] * target_w + x]
                    + wt[2] * src[idx[2] * target_w + x]
                    + wt[3] * src[idx[3] * target_w + x];
            }
        }
    }
    Image::new(c, target_h, target_w, out)
}

pub fn bicubic_resize(img: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    Ok(bicubic_resize_unclamped(img, target_h, target_w)?.clamp_pixels())
}

fn check_factor(img: &Image, factor: u32) -> Result<(usize, usize)> {
    let f = factor as usize;
    if f == 0 || f > img.height.min(img.width) {
        return Err(Error::InvalidArgument(format!(
            "downsampling factor {factor} must be in 1..={} for a {}x{} image",
            img.height.min(img.width),
            img.height,
            img.width
        )));
    }
    Ok((img.height / f, img.width / f))
}

/// Downsample by `factor` (to `floor(H/factor) x floor(W/factor)`) and bicubic
/// upsample back to the original size. Both resizes clamp.
pub fn degrade_lowres(img: &Image, factor: u32) -> Result<Image> {
    let (h, w) = check_factor(img, factor)?;
    let small = bicubic_resize(img, h, w)?;
    bicubic_resize(&small, img.height, img.width)
}

/// [`degrade_lowres`] without any clamping.
pub fn degrade_lowres_unclamped(img: &Image, factor: u32) -> Result<Image> {
    let (h, w) = check_factor(img, factor)?;
    let small = bicubic_resize_unclamped(img, h, w)?;
    bicubic_resize_unclamped(&small, img.height, img.width)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct per-pixel 2-D kernel sum, written without the separable passes.
    fn oracle(img: &Image, th: usize, tw: usize) -> Image {
        let mut out = Image::filled(img.channels, th, tw, 0.0);
        let sy = img.height as f64 / th as f64;
        let sx = img.width as f64 / tw as f64;
        for c in 0..img.channels {
            for oy in 0..th {
                for ox in 0..tw {
                    let fy = (oy as f64 + 0.5) * sy - 0.5;
                    let fx = (ox as f64 + 0.5) * sx - 0.5;
                    let mut acc = 0.0;
                    for j in (fy.floor() as i64 - 1)..=(fy.floor() as i64 + 2) {
                        for i in (fx.floor() as i64 - 1)..=(fx.floor() as i64 + 2) {
                            let yy = j.clamp(0, img.height as i64 - 1) as usize;
                            let xx = i.clamp(0, img.width as i64 - 1) as usize;
                            acc += keys_kernel(fy - j as f64) * keys_kernel(fx - i as f64) * img.get(c, yy, xx);
                        }
                    }
                    out.set(c, oy, ox, acc.clamp(0.0, 255.0));
                }
            }
        }
        out
    }

    fn max_diff(a: &Image, b: &Image) -> f64 {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn kernel_values() {
        assert_eq!(keys_kernel(0.0), 1.0);
        assert_eq!(keys_kernel(1.0), 0.0);
        assert_eq!(keys_kernel(2.0), 0.0);
        assert!((keys_kernel(0.5) - 0.5625).abs() < 1e-15);
        assert!((keys_kernel(1.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn same_size_is_identity() {
        let img = Image::new(1, 5, 7, (0..35).map(|i| (i * 7 % 255) as f64).collect()).unwrap();
        assert_eq!(bicubic_resize(&img, 5, 7).unwrap(), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(2, 9, 13, 117.0);
        for (h, w) in [(3, 4), (18, 26), (9, 1), (1, 1)] {
            let out = bicubic_resize(&img, h, w).unwrap();
            assert!(out.data.iter().all(|v| (v - 117.0).abs() < 1e-9));
        }
    }

    #[test]
    fn ramp_downsize_matches_kernel_sum_oracle() {
        let img = Image::new(1, 8, 8, (0..64).map(|i| (i % 8) as f64 * 30.0 + 10.0).collect()).unwrap();
        let out = bicubic_resize(&img, 4, 4).unwrap();
        assert!(max_diff(&out, &oracle(&img, 4, 4)) < 1e-9);
    }

    #[test]
    fn checkerboard_lowres_matches_composed_oracle() {
        let img = Image::new(
            1,
            32,
            32,
            (0..1024)
                .map(|i| if (i / 32 + i % 32) % 2 == 0 { 255.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let out = degrade_lowres(&img, 2).unwrap();
        let expect = oracle(&oracle(&img, 16, 16), 32, 32);
        assert!(max_diff(&out, &expect) < 1e-9);
        assert!(out.in_range());
    }

    #[test]
    fn factor_one_is_identity_and_large_factor_rejected() {
        let img = Image::new(1, 6, 6, (0..36).map(|i| i as f64 * 7.0).collect()).unwrap();
        assert_eq!(degrade_lowres(&img, 1).unwrap(), img);
        assert!(degrade_lowres(&img, 7).is_err());
        assert!(degrade_lowres(&img, 0).is_err());
        assert!(bicubic_resize(&img, 0, 3).is_err());
    }

    #[test]
    fn non_divisible_size_uses_floor() {
        let img = Image::filled(1, 7, 9, 50.0);
        let out = degrade_lowres(&img, 2).unwrap();
        assert_eq!((out.height, out.width), (7, 9));
    }
}
