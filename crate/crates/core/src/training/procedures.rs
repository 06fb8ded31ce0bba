//! Robust adverse pre-training (RAP), its aggressive variant (ARAP) and the
//! HQ / LQ / non-joint baselines.
//!
//! Random streams: `M_s` initializes from `SubModelInit`, `M` from
//! `ModelInit`, both LQ sets (`y` from alpha, `z` from beta) from
//! `TrainDegrade`. Sharing the degradation stream means `z == y` whenever
//! beta equals alpha, so ARAP(a, a) is RAP(a) bit for bit.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::trainer::{grouped_lrs, run_stage, Objective, Stage, StageReport};
use crate::data::LabeledDataset;
use crate::degrade::{DegradeSpec, Image, PIXEL_MAX};
use crate::error::{Error, Result};
use crate::network::{build_submodel, init_weights, ModelSpec, SubModelSpec, WeightedModel};
use crate::rng::Purpose;
use crate::tensor::{Real, Tensor};

/// A trained reconstruction sub-model.
#[derive(Debug, Clone)]
pub struct Pretrained<R> {
    pub sub: SubModelSpec,
    pub model: WeightedModel<R>,
    pub report: StageReport,
    /// Degradation the sub-model learned to undo.
    pub degrade: DegradeSpec,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<R> {
    pub model: WeightedModel<R>,
    pub pretrained: Option<Pretrained<R>>,
    pub reports: Vec<StageReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hq,
    Lq,
    RapNonJoint,
    Rap,
    Arap,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hq" => Method::Hq,
            "lq" => Method::Lq,
            "rap-non-joint" => Method::RapNonJoint,
            "rap" => Method::Rap,
            "arap" => Method::Arap,
            other => return Err(Error::InvalidArgument(format!("unknown training mode `{other}`"))),
        })
    }
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hq => "hq",
            Method::Lq => "lq",
            Method::RapNonJoint => "rap-non-joint",
            Method::Rap => "rap",
            Method::Arap => "arap",
        }
    }
}

/// Fits `ms` to map `lq` inputs onto `hq` targets under the MSE loss.
pub fn train_submodel<R: Real>(
    ms: &mut WeightedModel<R>,
    lq: &[Tensor<R>],
    hq: &[Tensor<R>],
    cfg: &TrainConfig,
) -> Result<StageReport> {
    let stage = Stage {
        name: "submodel",
        inputs: lq,
        objective: Objective::Reconstruct(hq),
        iterations: cfg.pretrain_iterations,
        lrs: vec![Some(cfg.submodel_lr); ms.params.len()],
        shuffle: Purpose::PretrainShuffle,
        salt: 0,
        ties: &[],
    };
    run_stage(ms, &stage, cfg)
}

/// Degrades with `beta`, builds `M_s` and trains it to
/// restore the HQ images.
pub fn pretrain_submodel<R: Real>(
    spec: &ModelSpec,
    hq: &LabeledDataset,
    beta: &DegradeSpec,
    k: usize,
    k_p: usize,
    cfg: &TrainConfig,
) -> Result<Pretrained<R>> {
    let sub = build_submodel(spec, k, k_p, hq.image_shape()[0])?;
    let mut ms = WeightedModel::init(&sub.net, cfg.seed, Purpose::SubModelInit)?;
    let z = hq.degraded(beta, cfg.seed, Purpose::TrainDegrade)?;
    let report = train_submodel(&mut ms, &z.network_inputs(), &hq.network_inputs(), cfg)?;
    ms.provenance.stage = "submodel".into();
    ms.provenance.notes.insert("degrade".into(), beta.to_string());
    ms.provenance.notes.insert("k".into(), k.to_string());
    ms.provenance.notes.insert("k_p".into(), k_p.to_string());
    Ok(Pretrained {
        sub,
        model: ms,
        report,
        degrade: beta.clone(),
    })
}

fn tune<R: Real>(
    spec: &ModelSpec,
    pre: Option<&Pretrained<R>>,
    train: &LabeledDataset,
    frozen_prefix: bool,
    cfg: &TrainConfig,
) -> Result<(WeightedModel<R>, StageReport)> {
    let mut m = init_weights::<R>(spec, cfg.seed)?;
    let k_p = pre.map_or(0, |p| p.sub.k_p);
    if let Some(p) = pre {
        m.import_prefix(&p.model, k_p)?;
    }
    tune_from(m, k_p, frozen_prefix, train, cfg)
}

/// Tunes an initialized `m` on labelled data: the first `k_p` layers at
/// `prefix_lr` (or frozen), the rest at `tail_lr`.
pub fn tune_from<R: Real>(
    mut m: WeightedModel<R>,
    k_p: usize,
    frozen_prefix: bool,
    train: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(WeightedModel<R>, StageReport)> {
    let prefix_lr = if frozen_prefix { None } else { Some(cfg.prefix_lr) };
    let stage = Stage {
        name: if k_p > 0 { "tune" } else { "train" },
        inputs: &train.network_inputs(),
        objective: Objective::Classify(&train.labels),
        iterations: cfg.tune_iterations,
        lrs: grouped_lrs(m.params.len(), k_p, prefix_lr, cfg.tail_lr),
        shuffle: Purpose::TuneShuffle,
        salt: 0,
        ties: &[],
    };
    let report = run_stage(&mut m, &stage, cfg)?;
    Ok((m, report))
}

/// Exports the first `k_p` layers of `M_s` into a fresh `M` and
/// tunes all of `M` on the labelled LQ data.
pub fn joint_tune<R: Real>(
    spec: &ModelSpec,
    pre: &Pretrained<R>,
    lq: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    let (mut model, report) = tune(spec, Some(pre), lq, false, cfg)?;
    model.provenance.stage = "joint".into();
    Ok(TrainOutput {
        model,
        pretrained: Some(pre.clone()),
        reports: vec![pre.report.clone(), report],
    })
}

/// Like [`joint_tune`] but the exported layers stay fixed.
pub fn non_joint_tune<R: Real>(
    spec: &ModelSpec,
    pre: &Pretrained<R>,
    lq: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    let (mut model, report) = tune(spec, Some(pre), lq, true, cfg)?;
    model.provenance.stage = "rap-non-joint".into();
    Ok(TrainOutput {
        model,
        pretrained: Some(pre.clone()),
        reports: vec![pre.report.clone(), report],
    })
}

/// Trains `M` end to end on `train` with `tail_lr` for every layer.
pub fn train_from_scratch<R: Real>(
    spec: &ModelSpec,
    train: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    let (model, report) = tune::<R>(spec, None, train, false, cfg)?;
    Ok(TrainOutput {
        model,
        pretrained: None,
        reports: vec![report],
    })
}

pub fn rap<R: Real>(
    spec: &ModelSpec,
    hq: &LabeledDataset,
    alpha: &DegradeSpec,
    k: usize,
    k_p: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    arap(spec, hq, alpha, alpha, k, k_p, cfg)
}

/// `M_s` learns from the severer `beta` while `M` is tuned on `alpha` data.
pub fn arap<R: Real>(
    spec: &ModelSpec,
    hq: &LabeledDataset,
    alpha: &DegradeSpec,
    beta: &DegradeSpec,
    k: usize,
    k_p: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    if !beta.at_least_as_severe_as(alpha) {
        return Err(Error::InvalidArgument(format!(
            "beta `{beta}` must be at least as severe as alpha `{alpha}`"
        )));
    }
    let pre = pretrain_submodel::<R>(spec, hq, beta, k, k_p, cfg)?;
    let y = hq.degraded(alpha, cfg.seed, Purpose::TrainDegrade)?;
    let mut out = joint_tune(spec, &pre, &y, cfg)?;
    let notes = &mut out.model.provenance.notes;
    notes.insert("alpha".into(), alpha.to_string());
    notes.insert("beta".into(), beta.to_string());
    notes.insert("k".into(), k.to_string());
    notes.insert("k_p".into(), k_p.to_string());
    out.model.provenance.stage = if alpha == beta { "rap" } else { "arap" }.into();
    Ok(out)
}

/// HQ, LQ and RAP-non-joint baselines.
pub fn train_baseline<R: Real>(
    spec: &ModelSpec,
    hq: &LabeledDataset,
    mode: Method,
    alpha: &DegradeSpec,
    k: usize,
    k_p: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    let mut out = match mode {
        Method::Hq => train_from_scratch(spec, hq, cfg)?,
        Method::Lq => train_from_scratch(spec, &hq.degraded(alpha, cfg.seed, Purpose::TrainDegrade)?, cfg)?,
        Method::RapNonJoint => {
            let pre = pretrain_submodel::<R>(spec, hq, alpha, k, k_p, cfg)?;
            let y = hq.degraded(alpha, cfg.seed, Purpose::TrainDegrade)?;
            non_joint_tune(spec, &pre, &y, cfg)?
        }
        Method::Rap | Method::Arap => {
            return Err(Error::InvalidArgument(format!("{} is not a baseline", mode.as_str())));
        }
    };
    out.model.provenance.stage = mode.as_str().into();
    out.model.provenance.notes.insert("alpha".into(), alpha.to_string());
    Ok(out)
}

/// Runs any of the five training methods. `beta` is required for ARAP only.
pub fn train_method<R: Real>(
    spec: &ModelSpec,
    hq: &LabeledDataset,
    method: Method,
    alpha: &DegradeSpec,
    beta: Option<&DegradeSpec>,
    k: usize,
    k_p: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    match method {
        Method::Rap => rap(spec, hq, alpha, k, k_p, cfg),
        Method::Arap => {
            let beta = beta.ok_or_else(|| Error::InvalidArgument("ARAP needs a beta degradation".into()))?;
            arap(spec, hq, alpha, beta, k, k_p, cfg)
        }
        other => train_baseline(spec, hq, other, alpha, k, k_p, cfg),
    }
}

pub fn image_to_input<R: Real>(img: &Image) -> Tensor<R> {
    Tensor::from_fn(&[img.channels, img.height, img.width], |i| {
        R::from_f64(img.data[i] / PIXEL_MAX)
    })
}

pub fn output_to_image<R: Real>(t: &Tensor<R>) -> Result<Image> {
    let &[c, h, w] = t.shape() else {
        return Err(Error::shape(
            "output_to_image",
            format!("expected [C,H,W], got {:?}", t.shape()),
        ));
    };
    Ok(Image::new(c, h, w, t.data().iter().map(|v| v.as_f64() * PIXEL_MAX).collect())?.clamp_pixels())
}

/// `M_s` applied to one image, in pixel units.
pub fn reconstruct<R: Real>(ms: &WeightedModel<R>, img: &Image) -> Result<Image> {
    output_to_image(&ms.predict(&image_to_input::<R>(img))?)
}

/// Passes the first `k_p`-layer features of `model` through the frozen tail
/// of `ms`. With a freshly exported, untuned `model` this is `ms`'s own
/// reconstruction.
pub fn visualize_features<R: Real>(
    model: &WeightedModel<R>,
    ms: &WeightedModel<R>,
    sub: &SubModelSpec,
    img: &Image,
) -> Result<Image> {
    if ms.spec != sub.net {
        return Err(Error::InvalidArgument(
            "sub-model weights do not match its specification".into(),
        ));
    }
    let features = model.forward_path(&image_to_input::<R>(img), &model.spec.prefix_path(sub.k_p)?)?;
    output_to_image(&ms.forward_range(&features, sub.tail_start()..sub.net.layers.len())?)
}
