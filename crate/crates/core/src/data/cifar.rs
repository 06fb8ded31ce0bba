//! CIFAR-10 binary batches, converted to grayscale on load.
//!
//! Each record is one label byte followed by 1024 red, 1024 green and 1024
//! blue bytes of a 32x32 image in row-major order.

use std::path::Path;

use super::dataset::{LabeledDataset, Split};
use super::tensor_file::read_all;
use crate::degrade::{Image, PIXEL_MAX};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];
pub const TRAIN_BATCHES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_BATCH: &str = "test_batch.bin";

/// BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    (LUMA[0] * r + LUMA[1] * g + LUMA[2] * b).clamp(0.0, PIXEL_MAX)
}

/// Single-channel luma of a 3-channel image; 1-channel images pass through.
pub fn grayscale(img: &Image) -> Result<Image> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let p = img.plane();
            let data = (0..p)
                .map(|i| luma(img.data[i], img.data[p + i], img.data[2 * p + i]))
                .collect();
            Image::new(1, img.height, img.width, data)
        }
        c => Err(Error::InvalidArgument(format!(
            "grayscale needs 1 or 3 channels, got {c}"
        ))),
    }
}

/// Decodes whole records into grayscale images `[N, 1, 32, 32]` and labels.
pub fn parse_cifar10(bytes: &[u8]) -> Result<(Tensor<f64>, Vec<usize>)> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Data(format!(
            "CIFAR-10 data of {} bytes is not a whole number of {CIFAR_RECORD}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut data = Vec::with_capacity(n * plane);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES.len() {
            return Err(Error::Data(format!("record {i} has label {label}, expected 0-9")));
        }
        labels.push(label);
        let px = &rec[1..];
        data.extend((0..plane).map(|j| luma(px[j] as f64, px[plane + j] as f64, px[2 * plane + j] as f64)));
    }
    Ok((Tensor::new(vec![n, 1, CIFAR_SIDE, CIFAR_SIDE], data)?, labels))
}

pub fn load_cifar10_file(path: &Path, split: Split) -> Result<LabeledDataset> {
    let (images, labels) = parse_cifar10(&read_all(path)?).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    LabeledDataset::new("cifar10", split, images, labels, CIFAR_CLASSES.len())
}

/// Loads a split from the standard `cifar-10-batches-bin` directory.
pub fn load_cifar10(dir: &Path, split: Split) -> Result<LabeledDataset> {
    let names: &[&str] = match split {
        Split::Train => &TRAIN_BATCHES,
        Split::Test => &[TEST_BATCH],
    };
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for name in names {
        let part = load_cifar10_file(&dir.join(name), split)?;
        data.extend_from_slice(part.images.data());
        labels.extend(part.labels);
    }
    let images = Tensor::new(vec![labels.len(), 1, CIFAR_SIDE, CIFAR_SIDE], data)?;
    LabeledDataset::new("cifar10", split, images, labels, CIFAR_CLASSES.len())
}
