use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::image::{Image, PIXEL_MAX};
use crate::error::{Error, Result};

/// Replaces exactly `floor(fraction * H * W)` distinct pixel positions, sampled
/// without replacement, with 0 or 255 (probability one half each). All channels
/// of a chosen position receive the same value.
pub fn degrade_salt_pepper<G: Rng + ?Sized>(img: &Image, fraction: f64, rng: &mut G) -> Result<Image> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "salt & pepper fraction {fraction} outside [0, 1]"
        )));
    }
    let positions = img.plane();
    let count = (fraction * positions as f64).floor() as usize;
    let mut out = img.clone();
    for pos in rand::seq::index::sample(rng, positions, count).into_iter() {
        let value = if rng.gen_bool(0.5) { PIXEL_MAX } else { 0.0 };
        for c in 0..img.channels {
            out.data[c * positions + pos] = value;
        }
    }
    Ok(out)
}

/// Adds i.i.d. zero-mean Gaussian noise without clamping.
pub fn gaussian_noise_unclamped<G: Rng + ?Sized>(img: &Image, std: f64, rng: &mut G) -> Result<Image> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise std must be non-negative, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| *v += normal.sample(rng));
    Ok(out)
}

pub fn degrade_gaussian_noise<G: Rng + ?Sized>(img: &Image, std: f64, rng: &mut G) -> Result<Image> {
    Ok(gaussian_noise_unclamped(img, std, rng)?.clamp_pixels())
}
