use super::image::Image;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(std: f64, ksize: usize) -> Result<()> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::InvalidArgument(format!("blur std must be positive, got {std}")));
    }
    if ksize == 0 || ksize.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "blur kernel size must be odd, got {ksize}"
        )));
    }
    Ok(())
}

/// Normalised 1-D Gaussian sampled at integer offsets from the centre.
fn kernel_1d(std: f64, ksize: usize) -> Vec<f64> {
    let r = (ksize / 2) as f64;
    let raw: Vec<f64> = (0..ksize)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * std * std)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// `ksize x ksize` Gaussian kernel normalised to unit sum.
pub fn make_gaussian_kernel(std: f64, ksize: usize) -> Result<Tensor<f64>> {
    check(std, ksize)?;
    let k = kernel_1d(std, ksize);
    Tensor::new(
        vec![ksize, ksize],
        (0..ksize * ksize).map(|i| k[i / ksize] * k[i % ksize]).collect(),
    )
}

/// Gaussian blur with edge replication; no clamping.
pub fn gaussian_blur_unclamped(img: &Image, std: f64, ksize: usize) -> Result<Image> {
    check(std, ksize)?;
    let k = kernel_1d(std, ksize);
    let r = (ksize / 2) as isize;
    let (c, h, w) = (img.channels, img.height, img.width);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; img.data.len()];
    for ch in 0..c {
        for y in 0..h {
            let row = &img.data[(ch * h + y) * w..][..w];
            for x in 0..w {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    acc += kv * row[clamp(x as isize + i as isize - r, w)];
                }
                tmp[(ch * h + y) * w + x] = acc;
            }
        }
    }
    let mut out = vec![0.0; img.data.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    acc += kv * tmp[(ch * h + clamp(y as isize + i as isize - r, h)) * w + x];
                }
                out[(ch * h + y) * w + x] = acc;
            }
        }
    }
    Image::new(c, h, w, out)
}

pub fn degrade_gaussian_blur(img: &Image, std: f64, ksize: usize) -> Result<Image> {
    Ok(gaussian_blur_unclamped(img, std, ksize)?.clamp_pixels())
}
