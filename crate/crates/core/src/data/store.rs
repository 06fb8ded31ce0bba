//! Dataset and video directories.
//!
//! A dataset directory holds `manifest.json` and, per split,
//! `<split>.images.tensor` (`[N, C, H, W]`, f64) and `<split>.labels.tensor`
//! (`[N]`, u32). A video directory holds `videos.json` and one frame tensor
//! `[C, H, W]` per file, listed in playback order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Split};
use super::tensor_file::{read_all, read_tensor, write_locked, write_tensor, DType};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::Video;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VIDEO_MANIFEST_FILE: &str = "videos.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    /// Record count per split name.
    pub splits: BTreeMap<String, usize>,
    /// `[C, H, W]`.
    pub image_shape: [usize; 3],
    pub class_names: Vec<String>,
    /// Where the images came from, e.g. `cifar10-binary` or `synth-shapes`.
    pub source_format: String,
    /// Degradation applied to every split, if any.
    #[serde(default)]
    pub degrade: Option<String>,
    /// Seed of the generator or degradation.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }
}

fn split_files(dir: &Path, split: Split) -> (std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("{}.images.tensor", split.as_str())),
        dir.join(format!("{}.labels.tensor", split.as_str())),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    write_locked(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_all(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Writes the given splits and a manifest describing them.
pub fn save_dataset(dir: &Path, manifest: &DatasetManifest, splits: &[&LabeledDataset]) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = manifest.clone();
    m.splits.clear();
    for ds in splits {
        if ds.image_shape() != m.image_shape || ds.classes != m.classes() {
            return Err(Error::Data(format!(
                "{} split has shape {:?} and {} classes; manifest says {:?} and {}",
                ds.split.as_str(),
                ds.image_shape(),
                ds.classes,
                m.image_shape,
                m.classes()
            )));
        }
        let (img, lab) = split_files(dir, ds.split);
        write_tensor(&img, &ds.images, DType::F64)?;
        let labels = Tensor::new(vec![ds.len()], ds.labels.iter().map(|&l| l as f64).collect())?;
        write_tensor(&lab, &labels, DType::U32)?;
        m.splits.insert(ds.split.as_str().to_string(), ds.len());
    }
    write_json(&dir.join(MANIFEST_FILE), &m)?;
    Ok(m)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

/// Loads one split and checks it against the manifest.
pub fn load_dataset(dir: &Path, split: Split) -> Result<LabeledDataset> {
    let m = load_manifest(dir)?;
    let expected = *m
        .splits
        .get(split.as_str())
        .ok_or_else(|| Error::Data(format!("{} has no {} split", dir.display(), split.as_str())))?;
    let (img, lab) = split_files(dir, split);
    let (_, images) = read_tensor(&img)?;
    let (dtype, labels) = read_tensor(&lab)?;
    if !matches!(dtype, DType::U8 | DType::U32) || labels.ndim() != 1 {
        return Err(Error::Data(format!(
            "{} must be a rank-1 integer tensor",
            lab.display()
        )));
    }
    let [c, h, w] = m.image_shape;
    if images.shape() != [expected, c, h, w] {
        return Err(Error::Data(format!(
            "{} has shape {:?}, manifest expects {:?}",
            img.display(),
            images.shape(),
            [expected, c, h, w]
        )));
    }
    let labels: Vec<usize> = labels.data().iter().map(|&v| v as usize).collect();
    let mut ds = LabeledDataset::new(m.name.clone(), split, images, labels, m.classes())?;
    ds.degrade = m.degrade.clone();
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub id: usize,
    pub label: usize,
    /// Frame files relative to the directory, in playback order.
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoManifest {
    pub name: String,
    pub class_names: Vec<String>,
    pub videos: Vec<VideoEntry>,
}

pub fn save_videos(dir: &Path, name: &str, class_names: &[String], videos: &[Video]) -> Result<VideoManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(videos.len());
    for v in videos {
        let mut frames = Vec::with_capacity(v.len());
        for f in 0..v.len() {
            let file = format!("v{:05}_f{:04}.tensor", v.id, f);
            write_tensor(&dir.join(&file), &v.frames.slice_outer(f)?, DType::F64)?;
            frames.push(file);
        }
        entries.push(VideoEntry {
            id: v.id,
            label: v.label,
            frames,
        });
    }
    let m = VideoManifest {
        name: name.to_string(),
        class_names: class_names.to_vec(),
        videos: entries,
    };
    write_json(&dir.join(VIDEO_MANIFEST_FILE), &m)?;
    Ok(m)
}

pub fn load_videos(dir: &Path) -> Result<(VideoManifest, Vec<Video>)> {
    let m: VideoManifest = read_json(&dir.join(VIDEO_MANIFEST_FILE))?;
    let mut videos = Vec::with_capacity(m.videos.len());
    for e in &m.videos {
        if e.label >= m.class_names.len() {
            return Err(Error::Data(format!(
                "video {} has label {} of {} classes",
                e.id,
                e.label,
                m.class_names.len()
            )));
        }
        if e.frames.is_empty() {
            return Err(Error::Data(format!("video {} lists no frames", e.id)));
        }
        let frames: Vec<Tensor<f64>> = e
            .frames
            .iter()
            .map(|f| read_tensor(&dir.join(f)).map(|(_, t)| t))
            .collect::<Result<_>>()?;
        if frames.iter().any(|f| f.ndim() != 3 || f.shape() != frames[0].shape()) {
            return Err(Error::Data(format!(
                "video {} frames must share one [C,H,W] shape",
                e.id
            )));
        }
        videos.push(Video::new(e.id, e.label, Tensor::stack(&frames)?)?);
    }
    Ok((m, videos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_shapes, SynthParams};

    fn manifest() -> DatasetManifest {
        DatasetManifest {
            name: "shapes".into(),
            splits: BTreeMap::new(),
            image_shape: [1, 16, 16],
            class_names: ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
            source_format: "synth-shapes".into(),
            degrade: None,
            seed: Some(4),
        }
    }

    #[test]
    fn dataset_round_trip() {
        let p = SynthParams {
            size: 16,
            ..SynthParams::default()
        };
        let train = synth_shapes(&p, 12, 4, Split::Train).unwrap();
        let test = synth_shapes(&p, 5, 4, Split::Test).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = save_dataset(dir.path(), &manifest(), &[&train, &test]).unwrap();
        assert_eq!(m.splits["train"], 12);
        assert_eq!(load_manifest(dir.path()).unwrap(), m);
        let back = load_dataset(dir.path(), Split::Train).unwrap();
        assert!(back.images.bit_eq(&train.images));
        assert_eq!(back.labels, train.labels);
        assert_eq!(load_dataset(dir.path(), Split::Test).unwrap().len(), 5);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let p = SynthParams {
            size: 16,
            ..SynthParams::default()
        };
        let train = synth_shapes(&p, 6, 1, Split::Train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut m = save_dataset(dir.path(), &manifest(), &[&train]).unwrap();
        assert!(load_dataset(dir.path(), Split::Test).is_err());
        m.splits.insert("train".into(), 7);
        write_json(&dir.path().join(MANIFEST_FILE), &m).unwrap();
        assert!(load_dataset(dir.path(), Split::Train).is_err());
    }

    #[test]
    fn wrong_shape_is_rejected_on_save() {
        let train = synth_shapes(&SynthParams::default(), 4, 1, Split::Train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(save_dataset(dir.path(), &manifest(), &[&train]).is_err());
    }

    #[test]
    fn video_round_trip() {
        let frames = Tensor::from_fn(&[3, 1, 4, 4], |i| i as f64);
        let v = Video::new(2, 1, frames).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let names = vec!["x".to_string(), "y".to_string()];
        let m = save_videos(dir.path(), "toy", &names, std::slice::from_ref(&v)).unwrap();
        assert_eq!(m.videos[0].frames.len(), 3);
        let (m2, back) = load_videos(dir.path()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(back, vec![v]);
    }
}
