//! HQ to LQ degradation operators.
//!
//! Low resolution and blur act through the point-spread function; salt &
//! pepper, Gaussian noise and occlusion are additive. Every operator keeps the
//! image dimensions and clamps to `[0, 255]`.

pub mod blur;
pub mod image;
pub mod noise;
pub mod occlusion;
pub mod resize;
pub mod spec;

pub use blur::{degrade_gaussian_blur, gaussian_blur_unclamped, make_gaussian_kernel};
pub use image::{psnr, Image, PIXEL_MAX};
pub use noise::{degrade_gaussian_noise, degrade_salt_pepper, gaussian_noise_unclamped};
pub use occlusion::{degrade_occlude, occlude_with, Occluder, OccluderShape, OcclusionParams, PixelRect};
pub use resize::{bicubic_resize, bicubic_resize_unclamped, degrade_lowres, degrade_lowres_unclamped};
pub use spec::{AdverseKind, DegradeSpec};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::tensor::Tensor;

/// Degrades every image of an `[N, C, H, W]` batch. Image `i` draws from the
/// stream `(seed, purpose, i)`, so the result does not depend on processing
/// order.
pub fn degrade_batch(images: &Tensor<f64>, spec: &DegradeSpec, seed: u64, purpose: Purpose) -> Result<Tensor<f64>> {
    let (n, c, h, w) = match images.shape() {
        &[n, c, h, w] => (n, c, h, w),
        s => return Err(Error::shape("degrade_batch", format!("expected [N,C,H,W], got {s:?}"))),
    };
    spec.validate()?;
    let per = c * h * w;
    let mut out = Vec::with_capacity(images.len());
    for i in 0..n {
        let img = Image::new(c, h, w, images.data()[i * per..(i + 1) * per].to_vec())?;
        let mut rng = stream(seed, purpose, i as u64);
        out.extend(spec.apply(&img, &mut rng)?.data);
    }
    Tensor::new(images.shape().to_vec(), out)
}
