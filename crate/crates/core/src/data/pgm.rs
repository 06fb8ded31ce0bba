//! Binary PGM (P5) and PPM (P6) export, 8 bits per sample.

use std::path::Path;

use super::tensor_file::write_locked;
use crate::degrade::Image;
use crate::error::{Error, Result};

/// Rounds to nearest (halves away from zero) and clamps to `[0, 255]`.
pub fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

pub fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::InvalidArgument(format!(
                "PNM export needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    let p = img.plane();
    for i in 0..p {
        for c in 0..img.channels {
            out.push(to_u8(img.data[c * p + i]));
        }
    }
    Ok(out)
}

pub fn write_pnm(path: &Path, img: &Image) -> Result<()> {
    write_locked(path, &encode_pnm(img)?)
}

/// Linearly maps `[min, max]` of the data onto `[0, 255]`. Constant images map to 0.
pub fn normalized(img: &Image) -> Image {
    let (lo, hi) = img
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let data = img
        .data
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span * 255.0 } else { 0.0 })
        .collect();
    Image { data, ..img.clone() }
}

/// Places images left to right with a one-pixel gap of value 0.
pub fn tile(images: &[Image]) -> Result<Image> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to tile".into()))?;
    if images
        .iter()
        .any(|i| (i.channels, i.height, i.width) != (first.channels, first.height, first.width))
    {
        return Err(Error::InvalidArgument("tiled images must share one shape".into()));
    }
    let (c, h, w) = (first.channels, first.height, first.width);
    let width = images.len() * (w + 1) - 1;
    let mut data = vec![0.0; c * h * width];
    for (n, img) in images.iter().enumerate() {
        for ch in 0..c {
            for y in 0..h {
                let dst = ch * h * width + y * width + n * (w + 1);
                data[dst..dst + w].copy_from_slice(&img.data[ch * h * w + y * w..][..w]);
            }
        }
    }
    Image::new(c, h, width, data)
}
