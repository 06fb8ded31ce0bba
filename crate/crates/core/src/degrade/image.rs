use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PIXEL_MAX: f64 = 255.0;

/// Channel-planar image with real-valued pixels, nominally in `[0, 255]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::shape(
                "image",
                format!("empty image {channels}x{height}x{width}"),
            ));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "image",
                format!(
                    "{channels}x{height}x{width} image needs {} values, got {}",
                    channels * height * width,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn clamp_pixels(mut self) -> Self {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, PIXEL_MAX));
        self
    }

    pub fn in_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=PIXEL_MAX).contains(v))
    }

    pub fn from_tensor(t: &Tensor<f64>) -> Result<Self> {
        match t.shape() {
            &[c, h, w] => Self::new(c, h, w, t.data().to_vec()),
            &[h, w] => Self::new(1, h, w, t.data().to_vec()),
            s => Err(Error::shape("image", format!("expected [C,H,W] or [H,W], got {s:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor<f64> {
        Tensor::new(vec![self.channels, self.height, self.width], self.data.clone())
            .expect("image dimensions are validated at construction")
    }

    /// Peak signal-to-noise ratio in dB against a reference of the same size.
    pub fn psnr(&self, reference: &Image) -> Result<f64> {
        if !self.same_dims(reference) {
            return Err(Error::shape("psnr", "image dimensions differ"));
        }
        Ok(psnr(&self.data, &reference.data, PIXEL_MAX))
    }
}

/// PSNR for arbitrary buffers with the given peak value. Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    10.0 * (peak * peak / mse).log10()
}
