//! Clip-level recognition with models built from a trained single-frame
//! network.
//!
//! A clip of `2T + 1` frames is fed to the network as one tensor with the
//! frames stacked along the channel axis. Early fusion widens the first conv
//! layer so it sees every frame at once; slow fusion runs the first conv layer
//! once per frame (a grouped convolution) and merges the branches at the
//! second. Both start out computing exactly what the single-frame model
//! computes on a clip of identical frames.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerParams, ModelSpec, Provenance, WeightedModel};
use crate::nn::loss::softmax;
use crate::rng::{stream, Purpose};
use crate::tensor::{Real, Tensor};
use crate::training::{predict_all, rank_of, run_stage, Objective, Stage, StageReport, Tie, TieTarget, TrainConfig};

/// Number of frames in a clip with half-width `t`.
pub fn clip_len(t: usize) -> usize {
    2 * t + 1
}

/// An ordered frame sequence `[L, C, H, W]` with one label.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: usize,
    pub label: usize,
    pub frames: Tensor<f64>,
}

impl Video {
    pub fn new(id: usize, label: usize, frames: Tensor<f64>) -> Result<Self> {
        if frames.ndim() != 4 {
            return Err(Error::Data(format!(
                "video frames must be [L,C,H,W], got {:?}",
                frames.shape()
            )));
        }
        Ok(Self { id, label, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        let s = self.frames.shape();
        [s[1], s[2], s[3]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub video: usize,
    pub start: usize,
    /// `[2T+1, C, H, W]`.
    pub frames: Tensor<f64>,
}

impl Clip {
    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    /// Network input `[(2T+1)·C, H, W]` scaled to `[0, 1]`.
    pub fn input<R: Real>(&self) -> Tensor<R> {
        let s = self.frames.shape();
        let shape = [s[0] * s[1], s[2], s[3]];
        Tensor::new(
            shape.to_vec(),
            self.frames.data().iter().map(|&v| R::from_f64(v / 255.0)).collect(),
        )
        .expect("clip shape")
    }
}

/// Every window of `2t + 1` contiguous frames, starting every `stride` frames.
pub fn extract_clips(video: &Video, t: usize, stride: usize) -> Result<Vec<Clip>> {
    let f = clip_len(t);
    if stride == 0 {
        return Err(Error::InvalidArgument("clip stride must be positive".into()));
    }
    if video.len() < f {
        return Err(Error::InvalidArgument(format!(
            "video {} has {} frames, fewer than the {f} a clip needs",
            video.id,
            video.len()
        )));
    }
    let frame = video.frames.len() / video.len();
    let [c, h, w] = video.frame_shape();
    (0..=video.len() - f)
        .step_by(stride)
        .map(|start| {
            let data = video.frames.data()[start * frame..(start + f) * frame].to_vec();
            Ok(Clip {
                video: video.id,
                start,
                frames: Tensor::new(vec![f, c, h, w], data)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Early,
    Slow,
}

impl FusionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionKind::Early => "early",
            FusionKind::Slow => "slow",
        }
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "early" => Ok(FusionKind::Early),
            "slow" => Ok(FusionKind::Slow),
            _ => Err(Error::InvalidArgument(format!(
                "unknown fusion '{s}', expected early or slow"
            ))),
        }
    }
}

/// A fused clip model together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoModel<R = f64> {
    pub model: WeightedModel<R>,
    pub kind: FusionKind,
    pub t: usize,
}

impl<R: Real> VideoModel<R> {
    pub fn frames(&self) -> usize {
        clip_len(self.t)
    }

    /// Gradient ties that keep the per-frame weight groups identical.
    pub fn ties(&self) -> Vec<Tie> {
        let groups = self.frames();
        let tie = |param, target, axis| Tie {
            param,
            target,
            axis,
            groups,
        };
        match self.kind {
            FusionKind::Early => vec![tie(0, TieTarget::Weights, 1)],
            FusionKind::Slow => vec![
                tie(0, TieTarget::Weights, 0),
                tie(0, TieTarget::Bias, 0),
                tie(1, TieTarget::Weights, 1),
            ],
        }
    }

    /// Whether every tied group is bit-identical to the first.
    pub fn is_symmetric(&self) -> bool {
        self.ties().iter().all(|t| {
            let p = &self.model.params[t.param];
            let tensor = match t.target {
                TieTarget::Weights => &p.weights,
                TieTarget::Bias => &p.bias,
            };
            let shape = tensor.shape();
            let outer: usize = shape[..t.axis].iter().product();
            let inner: usize = shape[t.axis + 1..].iter().product();
            let block = shape[t.axis] / t.groups * inner;
            let stride = shape[t.axis] * inner;
            let d = tensor.data();
            (0..outer).all(|o| {
                let first = &d[o * stride..o * stride + block];
                (1..t.groups).all(|g| {
                    let other = &d[o * stride + g * block..o * stride + (g + 1) * block];
                    first
                        .iter()
                        .zip(other)
                        .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
                })
            })
        })
    }
}

/// Layer indices of the first `n` parametric layers, which must all be
/// ungrouped convolutions.
fn leading_convs(spec: &ModelSpec, n: usize) -> Result<Vec<usize>> {
    let idx: Vec<usize> = spec.param_layer_indices().into_iter().take(n).collect();
    let ok = idx.len() == n
        && idx
            .iter()
            .all(|&i| matches!(spec.layers[i], LayerKind::Conv { groups: 1, .. }));
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "{} needs {n} leading ungrouped conv layer(s) to be fused",
            spec.name
        )));
    }
    Ok(idx)
}

/// Repeats each `[C, k, k]` input block of `w` `frames` times along axis 1,
/// dividing every copy by `frames`.
fn widen_inputs<R: Real>(w: &Tensor<R>, frames: usize) -> Result<Tensor<R>> {
    let s = w.shape();
    let (out, block) = (s[0], s[1] * s[2] * s[3]);
    let div = R::from_usize(frames);
    let mut data = Vec::with_capacity(w.len() * frames);
    for o in 0..out {
        let src = &w.data()[o * block..(o + 1) * block];
        for _ in 0..frames {
            data.extend(src.iter().map(|&v| v / div));
        }
    }
    Tensor::new(vec![out, s[1] * frames, s[2], s[3]], data)
}

fn repeat_outer<R: Real>(t: &Tensor<R>, frames: usize) -> Result<Tensor<R>> {
    let mut shape = t.shape().to_vec();
    shape[0] *= frames;
    Tensor::new(shape, t.data().repeat(frames))
}

fn fused_spec(single: &ModelSpec, kind: FusionKind, t: usize, layers: Vec<LayerKind>) -> Result<ModelSpec> {
    let [c, h, w] = single.input;
    ModelSpec::new(
        format!("{}-{}-t{t}", single.name, kind),
        [c * clip_len(t), h, w],
        layers,
    )
}

/// conv1 gains one input block per frame, each copy scaled by `1/(2T+1)`.
pub fn early_fuse<R: Real>(single: &WeightedModel<R>, t: usize) -> Result<VideoModel<R>> {
    let f = clip_len(t);
    leading_convs(&single.spec, 1)?;
    let spec = fused_spec(&single.spec, FusionKind::Early, t, single.spec.layers.clone())?;
    let mut params = single.params.clone();
    params[0].weights = widen_inputs(&single.params[0].weights, f)?;
    let mut provenance = single.provenance.clone();
    provenance.stage = "early-fusion".into();
    record_fusion(&mut provenance, FusionKind::Early, t);
    Ok(VideoModel {
        model: WeightedModel::from_parts(spec, params, provenance)?,
        kind: FusionKind::Early,
        t,
    })
}

/// conv1 runs once per frame with unchanged weights; conv2 takes the stacked
/// branch outputs with each copy scaled by `1/(2T+1)`.
pub fn slow_fuse<R: Real>(single: &WeightedModel<R>, t: usize) -> Result<VideoModel<R>> {
    let f = clip_len(t);
    let convs = leading_convs(&single.spec, 2)?;
    let mut layers = single.spec.layers.clone();
    if let LayerKind::Conv {
        out_channels, kernel, ..
    } = single.spec.layers[convs[0]]
    {
        layers[convs[0]] = LayerKind::Conv {
            out_channels: out_channels * f,
            kernel,
            groups: f,
        };
    }
    let spec = fused_spec(&single.spec, FusionKind::Slow, t, layers)?;
    let mut params = single.params.clone();
    params[0] = LayerParams {
        weights: repeat_outer(&single.params[0].weights, f)?,
        bias: repeat_outer(&single.params[0].bias, f)?,
    };
    params[1].weights = widen_inputs(&single.params[1].weights, f)?;
    let mut provenance = single.provenance.clone();
    provenance.stage = "slow-fusion".into();
    record_fusion(&mut provenance, FusionKind::Slow, t);
    Ok(VideoModel {
        model: WeightedModel::from_parts(spec, params, provenance)?,
        kind: FusionKind::Slow,
        t,
    })
}

fn record_fusion(p: &mut Provenance, kind: FusionKind, t: usize) {
    p.notes.insert("fusion".into(), kind.to_string());
    p.notes.insert("fusion_t".into(), t.to_string());
}

impl<R: Real> VideoModel<R> {
    /// Recovers a fused model from weights carrying the fusion notes that
    /// [`fuse`] records, e.g. after a checkpoint round trip.
    pub fn from_model(model: WeightedModel<R>) -> Result<Self> {
        let notes = &model.provenance.notes;
        let (Some(kind), Some(t)) = (notes.get("fusion"), notes.get("fusion_t")) else {
            return Err(Error::InvalidArgument(format!(
                "{} is not a fused video model",
                model.spec.name
            )));
        };
        let kind: FusionKind = kind.parse()?;
        let t: usize = t
            .parse()
            .map_err(|_| Error::Data(format!("bad fusion_t `{t}` in {}", model.spec.name)))?;
        let vm = Self { model, kind, t };
        if !vm.model.spec.input[0].is_multiple_of(vm.frames()) {
            return Err(Error::Data(format!(
                "{} input channels do not split into {} frames",
                vm.model.spec.name,
                vm.frames()
            )));
        }
        Ok(vm)
    }
}

pub fn fuse<R: Real>(single: &WeightedModel<R>, kind: FusionKind, t: usize) -> Result<VideoModel<R>> {
    match kind {
        FusionKind::Early => early_fuse(single, t),
        FusionKind::Slow => slow_fuse(single, t),
    }
}

/// Softmax of every clip's logits, in clip order.
pub fn clip_probabilities<R: Real>(vm: &VideoModel<R>, clips: &[Clip], threads: usize) -> Result<Vec<Vec<f64>>> {
    let inputs: Vec<Tensor<R>> = clips.iter().map(Clip::input).collect();
    Ok(predict_all(&vm.model, &inputs, threads)?
        .iter()
        .map(|l| softmax(l))
        .collect())
}

/// Mean of per-clip probability vectors, summed in order.
pub fn average_probabilities(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("no clips to average".into()))?;
    let mut acc = vec![0.0; first.len()];
    for r in rows {
        if r.len() != acc.len() {
            return Err(Error::Shape {
                op: "average_probabilities",
                detail: format!("rows of length {} and {}", acc.len(), r.len()),
            });
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Video-level class probabilities: the average of clip softmaxes.
pub fn predict_video<R: Real>(vm: &VideoModel<R>, video: &Video, stride: usize, threads: usize) -> Result<Vec<f64>> {
    let clips = extract_clips(video, vm.t, stride)?;
    average_probabilities(&clip_probabilities(vm, &clips, threads)?)
}

/// Clips of every video as network inputs, labelled with their video's label.
pub fn clip_dataset<R: Real>(videos: &[Video], t: usize, stride: usize) -> Result<(Vec<Tensor<R>>, Vec<usize>)> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for v in videos {
        for c in extract_clips(v, t, stride)? {
            inputs.push(c.input());
            labels.push(v.label);
        }
    }
    Ok((inputs, labels))
}

/// Tunes a fused model on clips with the per-frame groups tied. Every layer
/// uses `tail_lr`.
pub fn train_video<R: Real>(
    vm: &VideoModel<R>,
    videos: &[Video],
    stride: usize,
    cfg: &TrainConfig,
) -> Result<(VideoModel<R>, StageReport)> {
    let (inputs, labels) = clip_dataset::<R>(videos, vm.t, stride)?;
    let mut out = vm.clone();
    let ties = vm.ties();
    let stage = Stage {
        name: "video",
        inputs: &inputs,
        objective: Objective::Classify(&labels),
        iterations: cfg.tune_iterations,
        lrs: vec![Some(cfg.tail_lr); vm.model.params.len()],
        shuffle: Purpose::TuneShuffle,
        salt: 0x7669_6465,
        ties: &ties,
    };
    let report = run_stage(&mut out.model, &stage, cfg)?;
    out.model.provenance.stage = format!("video-{}", vm.kind);
    out.model.provenance.iteration = cfg.tune_iterations as u64;
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub kind: FusionKind,
    pub t: usize,
    /// Percent of clips whose own top class is the video label.
    pub clip_top1: f64,
    /// Percent of videos whose averaged prediction is correct.
    pub video_top1: f64,
    pub clips: usize,
    pub videos: usize,
}

pub fn evaluate_videos<R: Real>(
    vm: &VideoModel<R>,
    videos: &[Video],
    stride: usize,
    threads: usize,
) -> Result<VideoReport> {
    let (mut clip_hits, mut clips, mut video_hits) = (0usize, 0usize, 0usize);
    for v in videos {
        let probs = clip_probabilities(vm, &extract_clips(v, vm.t, stride)?, threads)?;
        clip_hits += probs.iter().filter(|p| rank_of(p, v.label) == 0).count();
        clips += probs.len();
        video_hits += usize::from(rank_of(&average_probabilities(&probs)?, v.label) == 0);
    }
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    Ok(VideoReport {
        kind: vm.kind,
        t: vm.t,
        clip_top1: pct(clip_hits, clips),
        video_top1: pct(video_hits, videos.len()),
        clips,
        videos: videos.len(),
    })
}

/// Copy of `img` (`[C, H, W]`) translated by `(dy, dx)` with edge replication.
fn shifted(img: &[f64], [c, h, w]: [usize; 3], dy: isize, dx: isize) -> Vec<f64> {
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Vec::with_capacity(img.len());
    for ch in 0..c {
        for y in 0..h {
            let sy = clampi(y as isize - dy, h);
            for x in 0..w {
                let sx = clampi(x as isize - dx, w);
                out.push(img[(ch * h + sy) * w + sx]);
            }
        }
    }
    out
}

/// Synthetic videos: each still image drifts by a random walk of unit steps
/// that stays within `max_shift` pixels of its origin.
pub fn jittered_videos(stills: &LabeledDataset, frames: usize, max_shift: usize, seed: u64) -> Result<Vec<Video>> {
    if frames == 0 {
        return Err(Error::InvalidArgument("videos need at least one frame".into()));
    }
    let shape = stills.image_shape();
    let plane: usize = shape.iter().product();
    let m = max_shift as isize;
    (0..stills.len())
        .map(|i| {
            let mut rng = stream(seed, Purpose::VideoJitter, i as u64);
            let img = &stills.images.data()[i * plane..(i + 1) * plane];
            let (mut dy, mut dx) = (0isize, 0isize);
            let mut data = Vec::with_capacity(frames * plane);
            for _ in 0..frames {
                data.extend(shifted(img, shape, dy, dx));
                dy = (dy + rng.gen_range(-1..=1)).clamp(-m, m);
                dx = (dx + rng.gen_range(-1..=1)).clamp(-m, m);
            }
            let [c, h, w] = shape;
            Video::new(i, stills.labels[i], Tensor::new(vec![frames, c, h, w], data)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_weights;
    use crate::rng::Rng;
    use rand::SeedableRng;

    fn single(pool: bool) -> WeightedModel<f64> {
        let mut layers = vec![LayerKind::conv(3, 3), LayerKind::Relu];
        if pool {
            layers.push(LayerKind::MaxPool2x2);
        }
        layers.extend([LayerKind::conv(2, 3), LayerKind::Relu, LayerKind::fc(4)]);
        let spec = ModelSpec::new("toy", [2, 6, 6], layers).unwrap();
        let mut m = init_weights::<f64>(&spec, 5).unwrap();
        // non-zero biases so bias handling is exercised
        for (j, p) in m.params.iter_mut().enumerate() {
            for (i, b) in p.bias.data_mut().iter_mut().enumerate() {
                *b = 0.05 * (i as f64 + 1.0) - 0.03 * j as f64;
            }
        }
        m
    }

    fn video(len: usize, seed: u64) -> Video {
        let mut rng = Rng::seed_from_u64(seed);
        let frames = Tensor::from_fn(&[len, 2, 6, 6], |_| rng.gen_range(0.0..255.0));
        Video::new(0, 1, frames).unwrap()
    }

    fn constant_clip(frame: &Tensor<f64>, t: usize) -> Tensor<f64> {
        let f = clip_len(t);
        let mut s = frame.shape().to_vec();
        s[0] *= f;
        Tensor::new(s, frame.data().repeat(f)).unwrap()
    }

    #[test]
    fn fused_model_survives_checkpoint() {
        let vm = slow_fuse(&single(true), 1).unwrap();
        let bytes = crate::data::checkpoint::encode_checkpoint(&vm.model).unwrap();
        let (_, m) = crate::data::checkpoint::decode_checkpoint::<f64>(&bytes).unwrap();
        assert_eq!(VideoModel::from_model(m).unwrap(), vm);
        assert!(VideoModel::from_model(single(true)).is_err());
    }

    #[test]
    fn clip_counts() {
        assert_eq!(extract_clips(&video(5, 0), 2, 1).unwrap().len(), 1);
        let c = extract_clips(&video(7, 0), 2, 1).unwrap();
        assert_eq!(c.iter().map(|c| c.start).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(extract_clips(&video(100, 0), 2, 1).unwrap().len(), 96);
        assert_eq!(extract_clips(&video(9, 0), 1, 3).unwrap().len(), 3);
        assert!(extract_clips(&video(4, 0), 2, 1).is_err());
        assert!(extract_clips(&video(9, 0), 1, 0).is_err());
    }

    #[test]
    fn clip_frames_are_contiguous() {
        let v = video(7, 1);
        let c = &extract_clips(&v, 1, 1).unwrap()[2];
        let frame = 2 * 36;
        assert_eq!(c.frames.data(), &v.frames.data()[2 * frame..5 * frame]);
        assert_eq!(c.input::<f64>().shape(), &[6, 6, 6]);
    }

    #[test]
    fn early_fusion_weights() {
        let m = single(false);
        let vm = early_fuse(&m, 2).unwrap();
        let w = &vm.model.params[0].weights;
        assert_eq!(w.shape(), &[3, 10, 3, 3]);
        let orig = m.params[0].weights.data();
        for o in 0..3 {
            for f in 0..5 {
                for e in 0..18 {
                    assert_eq!(w.data()[o * 90 + f * 18 + e], orig[o * 18 + e] / 5.0);
                }
            }
        }
        assert!(vm.model.params[0].bias.bit_eq(&m.params[0].bias));
        for j in 1..m.params.len() {
            assert!(vm.model.params[j].bit_eq(&m.params[j]));
        }
        let extra = vm.model.param_count() - m.param_count();
        assert_eq!(extra, 4 * m.params[0].weights.len());
        assert!(vm.is_symmetric());
    }

    #[test]
    fn slow_fusion_weights() {
        let m = single(true);
        let vm = slow_fuse(&m, 1).unwrap();
        let p0 = &vm.model.params[0];
        assert_eq!(p0.weights.shape(), &[9, 2, 3, 3]);
        for f in 0..3 {
            assert_eq!(&p0.weights.data()[f * 54..(f + 1) * 54], m.params[0].weights.data());
            assert_eq!(&p0.bias.data()[f * 3..(f + 1) * 3], m.params[0].bias.data());
        }
        let w2 = &vm.model.params[1].weights;
        assert_eq!(w2.shape(), &[2, 9, 3, 3]);
        let orig = m.params[1].weights.data();
        for o in 0..2 {
            for f in 0..3 {
                for e in 0..27 {
                    assert_eq!(w2.data()[o * 81 + f * 27 + e], orig[o * 27 + e] / 3.0);
                }
            }
        }
        assert!(vm.model.params[1].bias.bit_eq(&m.params[1].bias));
        assert!(vm.model.params[2].bit_eq(&m.params[2]));
        let w0 = m.params[0].weights.len() + m.params[1].weights.len();
        assert_eq!(
            vm.model.param_count() - m.param_count(),
            2 * w0 + 2 * m.params[0].bias.len()
        );
        assert!(vm.is_symmetric());
    }

    #[test]
    fn identical_frames_match_single_frame() {
        for pool in [false, true] {
            let m = single(pool);
            let frame = Tensor::from_fn(&[2, 6, 6], |i| ((i * 37) % 101) as f64 / 101.0);
            let reference = m.predict(&frame).unwrap();
            for t in 1..=3 {
                for kind in [FusionKind::Early, FusionKind::Slow] {
                    let vm = fuse(&m, kind, t).unwrap();
                    let out = vm.model.predict(&constant_clip(&frame, t)).unwrap();
                    assert!(out.max_abs_diff(&reference).unwrap() < 1e-10, "{kind} t={t}");
                }
            }
        }
    }

    #[test]
    fn fusion_needs_conv_layers() {
        let spec = ModelSpec::new("fc", [1, 4, 4], vec![LayerKind::fc(3)]).unwrap();
        let m = init_weights::<f64>(&spec, 0).unwrap();
        assert!(early_fuse(&m, 1).is_err());
        let spec = ModelSpec::new(
            "one",
            [1, 4, 4],
            vec![LayerKind::conv(2, 3), LayerKind::Relu, LayerKind::fc(3)],
        )
        .unwrap();
        let m = init_weights::<f64>(&spec, 0).unwrap();
        assert!(early_fuse(&m, 1).is_ok());
        assert!(slow_fuse(&m, 1).is_err());
    }

    #[test]
    fn video_prediction_averages_clip_softmax() {
        let vm = early_fuse(&single(false), 1).unwrap();
        let v = video(3, 2);
        let clip = &extract_clips(&v, 1, 1).unwrap()[0];
        let logits = vm.model.predict(&clip.input()).unwrap();
        let expect = softmax(logits.data());
        assert_eq!(predict_video(&vm, &v, 1, 1).unwrap(), expect);

        let v = video(5, 3);
        let probs: Vec<Vec<f64>> = extract_clips(&v, 1, 1)
            .unwrap()
            .iter()
            .map(|c| softmax(vm.model.predict(&c.input()).unwrap().data()))
            .collect();
        assert_eq!(probs.len(), 3);
        let got = predict_video(&vm, &v, 1, 2).unwrap();
        for k in 0..4 {
            let manual = (probs[0][k] + probs[1][k] + probs[2][k]) / 3.0;
            assert!((got[k] - manual).abs() < 1e-15);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn training_keeps_symmetry() {
        let m = single(true);
        let videos: Vec<Video> = (0..6)
            .map(|i| {
                let mut v = video(4, 10 + i as u64);
                v.id = i;
                v.label = i % 4;
                v
            })
            .collect();
        for kind in [FusionKind::Early, FusionKind::Slow] {
            let vm = fuse(&m, kind, 1).unwrap();
            let cfg = TrainConfig {
                tune_iterations: 0,
                batch_size: 4,
                tail_lr: 0.01,
                log_every: 0,
                ..TrainConfig::default()
            };
            let (same, _) = train_video(&vm, &videos, 1, &cfg).unwrap();
            assert!(same.model.bit_eq(&vm.model));
            let cfg = TrainConfig {
                tune_iterations: 30,
                ..cfg
            };
            let (trained, report) = train_video(&vm, &videos, 1, &cfg).unwrap();
            assert_eq!(report.losses.len(), 30);
            assert!(!trained.model.bit_eq(&vm.model));
            assert!(trained.is_symmetric(), "{kind}");
        }
    }

    #[test]
    fn jitter_stays_in_bounds() {
        let images = Tensor::from_fn(&[2, 1, 8, 8], |i| (i % 64) as f64);
        let ds = LabeledDataset::new("j", crate::data::Split::Train, images, vec![0, 1], 2).unwrap();
        let vids = jittered_videos(&ds, 6, 1, 3).unwrap();
        assert_eq!(vids.len(), 2);
        assert_eq!(vids[1].label, 1);
        assert_eq!(vids[0].frames.shape(), &[6, 1, 8, 8]);
        // first frame is the still itself
        assert_eq!(&vids[0].frames.data()[..64], &ds.images.data()[..64]);
        let again = jittered_videos(&ds, 6, 1, 3).unwrap();
        assert_eq!(vids, again);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn constant_clips_match_for_any_weights(seed in 0u64..10_000, t in 1usize..4, pool: bool) {
            let spec = single(pool).spec;
            let m = init_weights::<f64>(&spec, seed).unwrap();
            let mut rng = Rng::seed_from_u64(seed);
            let frame = Tensor::from_fn(&[2, 6, 6], |_| rng.gen_range(0.0..1.0));
            let reference = m.predict(&frame).unwrap();
            for kind in [FusionKind::Early, FusionKind::Slow] {
                let out = fuse(&m, kind, t).unwrap().model.predict(&constant_clip(&frame, t)).unwrap();
                proptest::prop_assert!(out.max_abs_diff(&reference).unwrap() < 1e-10);
            }
        }
    }
}
