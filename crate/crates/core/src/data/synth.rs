//! Procedural shape-classification images.
//!
//! Each image holds one filled, anti-aliased shape with random position,
//! size and intensity on a noisy background; rotation and inverted polarity
//! are optional. Image `i` has label
//! `i % classes` and draws from its own stream, so any prefix of a dataset is
//! the smaller dataset with the same seed.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::tensor::Tensor;

pub const SHAPE_NAMES: [&str; 8] = ["circle", "square", "triangle", "cross", "ring", "diamond", "bar", "ell"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub classes: usize,
    pub size: usize,
    /// Shape radius as a fraction of the image side.
    pub radius: [f64; 2],
    /// Background level range.
    pub background: [f64; 2],
    /// Foreground minus background.
    pub contrast: [f64; 2],
    /// When set, the foreground is darker than the background half the time.
    pub mixed_polarity: bool,
    /// Maximum absolute rotation in radians.
    pub rotation: f64,
    /// Std of the additive background noise.
    pub noise: f64,
    /// Sub-pixel samples per axis for anti-aliasing.
    pub supersample: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            classes: 4,
            size: 32,
            radius: [0.18, 0.32],
            background: [30.0, 130.0],
            contrast: [60.0, 120.0],
            mixed_polarity: false,
            rotation: 0.0,
            noise: 8.0,
            supersample: 4,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=SHAPE_NAMES.len()).contains(&self.classes) {
            return Err(Error::InvalidArgument(format!(
                "synthetic shapes support 1 to {} classes, got {}",
                SHAPE_NAMES.len(),
                self.classes
            )));
        }
        if self.size < 4 || self.supersample == 0 {
            return Err(Error::InvalidArgument(
                "image size must be at least 4 and supersample positive".into(),
            ));
        }
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0] >= 0.0;
        if !ordered(self.radius) || self.radius[1] > 0.5 || !ordered(self.background) || !ordered(self.contrast) {
            return Err(Error::InvalidArgument(format!(
                "invalid synthetic shape ranges: {self:?}"
            )));
        }
        if !(self.rotation >= 0.0 && self.rotation.is_finite()) {
            return Err(Error::InvalidArgument(
                "rotation must be finite and non-negative".into(),
            ));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidArgument("noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Whether the point `(u, v)`, in shape coordinates with unit radius, lies
/// inside shape `class`.
pub fn inside(class: usize, u: f64, v: f64) -> bool {
    match class {
        0 => u * u + v * v <= 1.0,
        1 => u.abs() <= 0.8 && v.abs() <= 0.8,
        2 => v >= -0.5 && v <= 1.0 - 3f64.sqrt() * u.abs(),
        3 => (u.abs() <= 0.3 && v.abs() <= 1.0) || (v.abs() <= 0.3 && u.abs() <= 1.0),
        4 => {
            let r2 = u * u + v * v;
            (0.3..=1.0).contains(&r2)
        }
        5 => u.abs() + v.abs() <= 1.0,
        6 => u.abs() <= 1.0 && v.abs() <= 0.3,
        _ => (u.abs() <= 0.3 && (-1.0..=1.0).contains(&v)) || ((0.7..=1.0).contains(&v) && (-0.3..=1.0).contains(&u)),
    }
}

fn uniform<G: Rng + ?Sized>(rng: &mut G, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Renders one image of `class` into `out` (`size * size` values).
pub fn render<G: Rng + ?Sized>(class: usize, p: &SynthParams, rng: &mut G, out: &mut [f64]) {
    let n = p.size as f64;
    let radius = uniform(rng, p.radius) * n;
    let margin = radius.min(n / 2.0);
    let cx = uniform(rng, [margin, n - margin]);
    let cy = uniform(rng, [margin, n - margin]);
    let theta = uniform(rng, [-p.rotation, p.rotation]);
    let bg = uniform(rng, p.background);
    let flip = p.mixed_polarity && rng.gen_bool(0.5);
    let delta = uniform(rng, p.contrast) * if flip { -1.0 } else { 1.0 };
    let fg = (bg + delta).clamp(0.0, 255.0);
    let (sin, cos) = theta.sin_cos();
    let ss = p.supersample;
    let normal = Normal::new(0.0, p.noise.max(f64::MIN_POSITIVE)).expect("valid std");
    for y in 0..p.size {
        for x in 0..p.size {
            let mut hits = 0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let px = x as f64 + (sx as f64 + 0.5) / ss as f64 - cx;
                    let py = y as f64 + (sy as f64 + 0.5) / ss as f64 - cy;
                    let u = (cos * px + sin * py) / radius;
                    let v = (-sin * px + cos * py) / radius;
                    hits += usize::from(inside(class, u, v));
                }
            }
            let cover = hits as f64 / (ss * ss) as f64;
            let noise = if p.noise > 0.0 { normal.sample(rng) } else { 0.0 };
            out[y * p.size + x] = (bg + cover * (fg - bg) + noise).clamp(0.0, 255.0);
        }
    }
}

/// Grayscale shape dataset; the test split uses a separate stream family.
pub fn synth_shapes(p: &SynthParams, count: usize, seed: u64, split: Split) -> Result<LabeledDataset> {
    p.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let purpose = match split {
        Split::Train => Purpose::Synth,
        Split::Test => Purpose::SynthTest,
    };
    let plane = p.size * p.size;
    let mut data = vec![0.0; count * plane];
    let mut labels = Vec::with_capacity(count);
    for (i, out) in data.chunks_exact_mut(plane).enumerate() {
        let class = i % p.classes;
        render(class, p, &mut stream(seed, purpose, i as u64), out);
        labels.push(class);
    }
    let images = Tensor::new(vec![count, 1, p.size, p.size], data)?;
    LabeledDataset::new("synth-shapes", split, images, labels, p.classes)
}
