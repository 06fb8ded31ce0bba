use serde::{Deserialize, Serialize};

use crate::degrade::{degrade_batch, DegradeSpec, Image, PIXEL_MAX};
use crate::error::{Error, Result};
use crate::rng::Purpose;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split `{other}`, expected train or test"
            ))),
        }
    }
}

/// Images `[N, C, H, W]` with pixel values in `[0, 255]` and one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub split: Split,
    pub images: Tensor<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Degradation applied to produce these images, if any.
    pub degrade: Option<String>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        images: Tensor<f64>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            split,
            images,
            labels,
            classes,
            degrade: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = match self.images.shape() {
            &[n, _, _, _] => n,
            s => {
                return Err(Error::Data(format!(
                    "{}: images must be [N,C,H,W], got {s:?}",
                    self.name
                )))
            }
        };
        if n != self.labels.len() {
            return Err(Error::Data(format!(
                "{}: {n} images but {} labels",
                self.name,
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::Data(format!(
                "{}: label {bad} outside {} classes",
                self.name, self.classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]`.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn image(&self, i: usize) -> Result<Image> {
        Image::from_tensor(&self.images.slice_outer(i)?)
    }

    /// Degraded copy. Image `i` uses stream `(seed, purpose, i)`.
    pub fn degraded(&self, spec: &DegradeSpec, seed: u64, purpose: Purpose) -> Result<Self> {
        Ok(Self {
            name: self.name.clone(),
            split: self.split,
            images: degrade_batch(&self.images, spec, seed, purpose)?,
            labels: self.labels.clone(),
            classes: self.classes,
            degrade: Some(spec.to_string()),
        })
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let [c, h, w] = self.image_shape();
        let per = c * h * w;
        Ok(Self {
            images: Tensor::new(vec![n, c, h, w], self.images.data()[..n * per].to_vec())?,
            labels: self.labels[..n].to_vec(),
            ..self.clone()
        })
    }

    /// Images scaled to `[0, 1]` in the network precision.
    pub fn network_inputs<R: Real>(&self) -> Vec<Tensor<R>> {
        to_network(&self.images)
    }
}

/// Splits an `[N, C, H, W]` batch into per-image tensors scaled by `1/255`.
pub fn to_network<R: Real>(images: &Tensor<f64>) -> Vec<Tensor<R>> {
    let s = images.shape();
    let per: usize = s[1..].iter().product();
    images
        .data()
        .chunks_exact(per)
        .map(|chunk| Tensor::from_fn(&s[1..], |i| R::from_f64(chunk[i] / PIXEL_MAX)))
        .collect()
}
