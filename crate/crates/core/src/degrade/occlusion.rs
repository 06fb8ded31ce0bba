//! Random periocular occlusion: one rectangle or ellipse centred inside an
//! eye-landmark box and filled with a single uniform value.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// Rectangle in continuous pixel coordinates; pixel `(x, y)` has its centre at
/// `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelRect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

/// Occlusion parameters. The eye box is given as fractions of the image size
/// so that one configuration serves any resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionParams {
    /// `[x0, y0, x1, y1]` as fractions of width/height.
    pub eye_box: [f64; 4],
    /// Shape width/height range as fractions of the eye box width/height.
    pub size_range: [f64; 2],
    pub value_range: [f64; 2],
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self {
            eye_box: [0.2, 0.25, 0.8, 0.5],
            size_range: [0.25, 0.6],
            value_range: [0.0, 255.0],
        }
    }
}

impl OcclusionParams {
    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.eye_box;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(x0) && unit(y0) && unit(x1) && unit(y1) && x0 <= x1 && y0 <= y1) {
            return Err(Error::InvalidArgument(format!(
                "eye box {:?} is not inside the unit square",
                self.eye_box
            )));
        }
        let [lo, hi] = self.size_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "occlusion size range {:?} is invalid",
                self.size_range
            )));
        }
        let [vlo, vhi] = self.value_range;
        if !(0.0 <= vlo && vlo <= vhi && vhi <= 255.0) {
            return Err(Error::InvalidArgument(format!(
                "occlusion value range {:?} is invalid",
                self.value_range
            )));
        }
        Ok(())
    }

    pub fn eye_box_pixels(&self, img: &Image) -> PixelRect {
        let (w, h) = (img.width as f64, img.height as f64);
        PixelRect {
            x0: self.eye_box[0] * w,
            y0: self.eye_box[1] * h,
            x1: self.eye_box[2] * w,
            y1: self.eye_box[3] * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OccluderShape {
    Rectangle,
    Ellipse,
}

/// One sampled occluder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub shape: OccluderShape,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub value: f64,
}

impl Occluder {
    pub fn covers(&self, x: usize, y: usize) -> bool {
        let dx = (x as f64 + 0.5 - self.cx) / (self.width / 2.0);
        let dy = (y as f64 + 0.5 - self.cy) / (self.height / 2.0);
        match self.shape {
            OccluderShape::Rectangle => dx.abs() <= 1.0 && dy.abs() <= 1.0,
            OccluderShape::Ellipse => dx * dx + dy * dy <= 1.0,
        }
    }
}

fn uniform<G: Rng + ?Sized>(rng: &mut G, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

pub fn sample_occluder<G: Rng + ?Sized>(eye_box: PixelRect, params: &OcclusionParams, rng: &mut G) -> Occluder {
    let shape = if rng.gen_bool(0.5) {
        OccluderShape::Rectangle
    } else {
        OccluderShape::Ellipse
    };
    let cx = uniform(rng, eye_box.x0, eye_box.x1);
    let cy = uniform(rng, eye_box.y0, eye_box.y1);
    let [lo, hi] = params.size_range;
    let width = uniform(rng, lo * eye_box.width(), hi * eye_box.width());
    let height = uniform(rng, lo * eye_box.height(), hi * eye_box.height());
    let value = uniform(rng, params.value_range[0], params.value_range[1]);
    Occluder {
        shape,
        cx,
        cy,
        width,
        height,
        value,
    }
}

/// Applies one random occluder and returns it along with the occluded image.
pub fn occlude_with<G: Rng + ?Sized>(
    img: &Image,
    eye_box: PixelRect,
    params: &OcclusionParams,
    rng: &mut G,
) -> Result<(Image, Occluder)> {
    if eye_box.x0 < 0.0
        || eye_box.y0 < 0.0
        || eye_box.x1 > img.width as f64
        || eye_box.y1 > img.height as f64
        || eye_box.x0 > eye_box.x1
        || eye_box.y0 > eye_box.y1
    {
        return Err(Error::InvalidArgument(format!(
            "eye box {eye_box:?} lies outside the {}x{} image",
            img.width, img.height
        )));
    }
    let occ = sample_occluder(eye_box, params, rng);
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            if occ.covers(x, y) {
                for c in 0..img.channels {
                    out.set(c, y, x, occ.value);
                }
            }
        }
    }
    Ok((out, occ))
}

pub fn degrade_occlude<G: Rng + ?Sized>(
    img: &Image,
    eye_box: PixelRect,
    rng: &mut G,
    params: &OcclusionParams,
) -> Result<Image> {
    occlude_with(img, eye_box, params, rng).map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn face() -> Image {
        Image::new(1, 64, 64, (0..4096).map(|i| 1.0 + (i % 250) as f64).collect()).unwrap()
    }

    #[test]
    fn occluded_pixels_share_one_value_and_center_in_box() {
        let img = face();
        let params = OcclusionParams::default();
        let eye = params.eye_box_pixels(&img);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (out, occ) = occlude_with(&img, eye, &params, &mut rng).unwrap();
            assert!(eye.contains(occ.cx, occ.cy));
            let changed: Vec<f64> = out
                .data
                .iter()
                .zip(&img.data)
                .filter(|(a, b)| a != b)
                .map(|(a, _)| *a)
                .collect();
            assert!(changed.iter().all(|&v| v == occ.value));
            for y in 0..64 {
                for x in 0..64 {
                    if occ.covers(x, y) {
                        assert_eq!(out.get(0, y, x), occ.value);
                    } else {
                        assert_eq!(out.get(0, y, x), img.get(0, y, x));
                    }
                }
            }
        }
    }

    #[test]
    fn shapes_are_equally_likely() {
        let img = face();
        let params = OcclusionParams::default();
        let eye = params.eye_box_pixels(&img);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 10_000;
        let rects = (0..draws)
            .filter(|_| sample_occluder(eye, &params, &mut rng).shape == OccluderShape::Rectangle)
            .count();
        let freq = rects as f64 / draws as f64;
        assert!((0.49..=0.51).contains(&freq), "{freq}");
    }

    #[test]
    fn box_outside_image_rejected() {
        let img = face();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bad = PixelRect {
            x0: 10.0,
            y0: 10.0,
            x1: 70.0,
            y1: 20.0,
        };
        assert!(degrade_occlude(&img, bad, &mut rng, &OcclusionParams::default()).is_err());
    }
}
