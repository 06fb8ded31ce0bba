//! Transfer ARAP: pre-train on a clean source set with an overestimated
//! degradation `beta'`, then hand the learned prefix to a model tuned on
//! target data that only exists in degraded form.
//!
//! The first `k_p` layers are transferred. Target datasets are used as given;
//! nothing here degrades them or asks for clean counterparts.

use std::fmt;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{model_digest, LabeledDataset};
use crate::degrade::DegradeSpec;
use crate::error::{Error, Result};
use crate::network::{init_weights, LayerKind, LayerParams, ModelSpec, WeightedModel, TAIL_KERNEL};
use crate::rng::{stream, Purpose};
use crate::tensor::{Real, Tensor};
use crate::training::{
    evaluate, pretrain_submodel, rap, run_stage, train_from_scratch, tune_from, EvalReport, Objective, Pretrained,
    Stage, StageReport, TrainConfig, TrainOutput,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferPlan {
    pub source: String,
    pub target: String,
    /// Severity the source sub-model learns to undo.
    pub beta_prime: DegradeSpec,
    /// Best guess of the target's own degradation, if known. When given,
    /// `beta_prime` must be strictly severer.
    #[serde(default)]
    pub believed_alpha: Option<DegradeSpec>,
    pub k: usize,
    pub k_p: usize,
    pub source_config: TrainConfig,
    pub target_config: TrainConfig,
}

impl TransferPlan {
    pub fn validate(&self) -> Result<()> {
        self.beta_prime.validate()?;
        if let Some(a) = &self.believed_alpha {
            a.validate()?;
            if !self.beta_prime.at_least_as_severe_as(a) || self.beta_prime == *a {
                return Err(Error::Config(format!(
                    "beta' `{}` must overestimate the believed target degradation `{a}`",
                    self.beta_prime
                )));
            }
        }
        if self.k_p == 0 || self.k_p >= self.k {
            return Err(Error::Config(format!(
                "need 0 < k_p < k, got k={} k_p={}",
                self.k, self.k_p
            )));
        }
        self.source_config.validate()?;
        self.target_config.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TransferOutput<R> {
    pub model: WeightedModel<R>,
    /// Model whose prefix was exported: the tuned source model, or the
    /// sub-model itself for the non-joint variant.
    pub exported_from: WeightedModel<R>,
    pub pretrained: Pretrained<R>,
    pub reports: Vec<StageReport>,
}

/// Copies the first `k_p` layers of `src` into a fresh target model and tunes
/// all of it on `target`.
pub fn transfer_prefix<R: Real>(
    target_spec: &ModelSpec,
    src: &WeightedModel<R>,
    k_p: usize,
    target: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(WeightedModel<R>, StageReport)> {
    let mut m = init_weights::<R>(target_spec, cfg.seed)?;
    m.import_prefix(src, k_p).map_err(|e| match e {
        Error::Shape { .. } | Error::InvalidArgument(_) => Error::InvalidArgument(format!(
            "source `{}` and target `{}` prefixes are not compatible: {e}",
            src.spec.name, target_spec.name
        )),
        other => other,
    })?;
    let (mut m, report) = tune_from(m, k_p, false, target, cfg)?;
    let notes = &mut m.provenance.notes;
    notes.insert("source_model".into(), model_digest(src)?);
    notes.insert("transferred_layers".into(), k_p.to_string());
    Ok((m, report))
}

fn annotate<R: Real>(m: &mut WeightedModel<R>, plan: &TransferPlan, stage: &str) -> Result<()> {
    m.provenance.stage = stage.into();
    let notes = &mut m.provenance.notes;
    notes.insert("source".into(), plan.source.clone());
    notes.insert("target".into(), plan.target.clone());
    notes.insert("beta_prime".into(), plan.beta_prime.to_string());
    let cfg = |c: &TrainConfig| serde_json::to_string(c).map_err(|e| Error::Data(e.to_string()));
    notes.insert("source_config".into(), cfg(&plan.source_config)?);
    notes.insert("target_config".into(), cfg(&plan.target_config)?);
    Ok(())
}

/// RAP with `beta'` on the source, then the tuned prefix moves to the target.
/// With the source tuning budget at zero, identical source and target and
/// `beta'` equal to the target's degradation, this is RAP bit for bit.
pub fn t_arap<R: Real>(
    source_spec: &ModelSpec,
    target_spec: &ModelSpec,
    plan: &TransferPlan,
    source: &LabeledDataset,
    target: &LabeledDataset,
) -> Result<TransferOutput<R>> {
    plan.validate()?;
    let src: TrainOutput<R> = rap(
        source_spec,
        source,
        &plan.beta_prime,
        plan.k,
        plan.k_p,
        &plan.source_config,
    )?;
    let pretrained = src.pretrained.expect("rap always pre-trains");
    let (mut model, report) = transfer_prefix(target_spec, &src.model, plan.k_p, target, &plan.target_config)?;
    annotate(&mut model, plan, "t-arap")?;
    let mut reports = src.reports;
    reports.push(report);
    Ok(TransferOutput {
        model,
        exported_from: src.model,
        pretrained,
        reports,
    })
}

/// Exports the prefix of the untuned sub-model instead of the tuned source model.
pub fn t_arap_non_joint<R: Real>(
    source_spec: &ModelSpec,
    target_spec: &ModelSpec,
    plan: &TransferPlan,
    source: &LabeledDataset,
    target: &LabeledDataset,
) -> Result<TransferOutput<R>> {
    plan.validate()?;
    let pre = pretrain_submodel::<R>(
        source_spec,
        source,
        &plan.beta_prime,
        plan.k,
        plan.k_p,
        &plan.source_config,
    )?;
    t_arap_non_joint_from(target_spec, plan, pre, target)
}

/// [`t_arap_non_joint`] with a sub-model that is already trained.
pub fn t_arap_non_joint_from<R: Real>(
    target_spec: &ModelSpec,
    plan: &TransferPlan,
    pre: Pretrained<R>,
    target: &LabeledDataset,
) -> Result<TransferOutput<R>> {
    let (mut model, report) = transfer_prefix(target_spec, &pre.model, plan.k_p, target, &plan.target_config)?;
    annotate(&mut model, plan, "t-arap-non-joint")?;
    Ok(TransferOutput {
        model,
        exported_from: pre.model.clone(),
        reports: vec![pre.report.clone(), report],
        pretrained: pre,
    })
}

/// Classical greedy pre-training: each conv layer in turn learns, as the
/// encoder of a one-hidden-layer autoencoder, to reconstruct its own input on
/// `target`. A linear conv decoder (kernel 5) is discarded afterwards. The
/// whole network is then trained with labels at `tail_lr`.
pub fn layerwise_pretrain_baseline<R: Real>(
    spec: &ModelSpec,
    target: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutput<R>> {
    let mut m = init_weights::<R>(spec, cfg.seed)?;
    let shapes = spec.activation_shapes()?;
    let inputs = target.network_inputs::<R>();
    let mut reports = Vec::new();
    for (j, &li) in spec.param_layer_indices().iter().enumerate() {
        let LayerKind::Conv {
            out_channels,
            kernel,
            groups,
        } = spec.layers[li]
        else {
            continue;
        };
        let [c, h, w] = shapes[li][..] else {
            unreachable!("conv inputs are [C,H,W]")
        };
        let mut layers = vec![LayerKind::Conv {
            out_channels,
            kernel,
            groups,
        }];
        if matches!(spec.layers.get(li + 1), Some(LayerKind::Relu)) {
            layers.push(LayerKind::Relu);
        }
        layers.push(LayerKind::conv(c, TAIL_KERNEL));
        let ae_spec = ModelSpec::new(format!("{}-ae{j}", spec.name), [c, h, w], layers)?;
        let fan_in = out_channels * TAIL_KERNEL * TAIL_KERNEL;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let mut rng = stream(cfg.seed, Purpose::AutoencoderInit, j as u64);
        let decoder = LayerParams {
            weights: Tensor::from_fn(&[c, out_channels, TAIL_KERNEL, TAIL_KERNEL], |_| {
                R::from_f64(normal.sample(&mut rng))
            }),
            bias: Tensor::zeros(&[c]),
        };
        let mut ae = WeightedModel::from_parts(ae_spec, vec![m.params[j].clone(), decoder], m.provenance.clone())?;
        let features: Vec<Tensor<R>> = inputs
            .iter()
            .map(|x| m.forward_range(x, 0..li))
            .collect::<Result<_>>()?;
        let stage = Stage {
            name: "layerwise",
            inputs: &features,
            objective: Objective::Reconstruct(&features),
            iterations: cfg.pretrain_iterations,
            lrs: vec![Some(cfg.submodel_lr); 2],
            shuffle: Purpose::PretrainShuffle,
            salt: j as u64 + 1,
            ties: &[],
        };
        reports.push(run_stage(&mut ae, &stage, cfg)?);
        m.params[j] = ae.params.swap_remove(0);
    }
    let (mut model, report) = tune_from(m, 0, false, target, cfg)?;
    model.provenance.stage = "lq-p".into();
    reports.push(report);
    Ok(TrainOutput {
        model,
        pretrained: None,
        reports,
    })
}

/// `count` severities from `max` down, evenly spaced and strictly above
/// `floor` when one is given. Only single-factor specs can be scanned.
pub fn descending_betas(max: &DegradeSpec, count: usize, floor: Option<&DegradeSpec>) -> Result<Vec<DegradeSpec>> {
    let scaled = |i: usize| -> Option<DegradeSpec> {
        let t = (count - i) as f64 / count as f64;
        Some(match *max {
            DegradeSpec::LowRes { factor } => DegradeSpec::LowRes {
                factor: factor.checked_sub(i as u32).filter(|&f| f >= 1)?,
            },
            DegradeSpec::SaltPepper { fraction } => DegradeSpec::SaltPepper { fraction: fraction * t },
            DegradeSpec::GaussianBlur { std, kernel_size } => DegradeSpec::GaussianBlur {
                std: std * t,
                kernel_size,
            },
            DegradeSpec::GaussianNoise { std } => DegradeSpec::GaussianNoise { std: std * t },
            _ => return None,
        })
    };
    if !matches!(
        max,
        DegradeSpec::LowRes { .. }
            | DegradeSpec::SaltPepper { .. }
            | DegradeSpec::GaussianBlur { .. }
            | DegradeSpec::GaussianNoise { .. }
    ) {
        return Err(Error::InvalidArgument(format!(
            "cannot scan `{max}`; list the betas explicitly"
        )));
    }
    Ok((0..count)
        .map_while(scaled)
        .take_while(|b| floor.is_none_or(|f| b.at_least_as_severe_as(f) && b != f))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta_prime: DegradeSpec,
    pub top1: f64,
    pub top5: f64,
}

/// Runs T-ARAP once per `beta'` and scores each result on `target_test`.
pub fn beta_sweep<R: Real>(
    source_spec: &ModelSpec,
    target_spec: &ModelSpec,
    plan: &TransferPlan,
    betas: &[DegradeSpec],
    source: &LabeledDataset,
    target: &LabeledDataset,
    target_test: &LabeledDataset,
) -> Result<Vec<SweepPoint>> {
    betas
        .iter()
        .map(|b| {
            let p = TransferPlan {
                beta_prime: b.clone(),
                ..plan.clone()
            };
            let out = t_arap::<R>(source_spec, target_spec, &p, source, target)?;
            let r = evaluate(&out.model, target_test, plan.target_config.threads)?;
            Ok(SweepPoint {
                beta_prime: b.clone(),
                top1: r.top1,
                top5: r.top5,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub method: String,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTable {
    pub source: String,
    pub target: String,
    pub beta_prime: String,
    pub rows: Vec<TransferRow>,
}

impl TransferTable {
    pub fn row(&self, method: &str) -> Option<&TransferRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

impl fmt::Display for TransferTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} -> {} (beta' = {})", self.source, self.target, self.beta_prime)?;
        writeln!(f, "{:<20} {:>7} {:>7}", "method", "top-1", "top-5")?;
        for r in &self.rows {
            writeln!(f, "{:<20} {:>7.2} {:>7.2}", r.method, r.top1, r.top5)?;
        }
        Ok(())
    }
}

pub struct Comparison<R> {
    pub table: TransferTable,
    /// Source model after RAP with `beta'`; T-ARAP starts from its prefix.
    pub source_model: WeightedModel<R>,
    pub pretrained: Pretrained<R>,
    pub models: Vec<(String, WeightedModel<R>)>,
    pub reports: Vec<EvalReport>,
}

/// Trains the four target models (direct, layer-wise pre-trained, T-ARAP
/// from the untuned sub-model, T-ARAP) and scores them on `target_test`.
/// The sub-model is trained once and shared by both transfer arms.
pub fn compare_transfer<R: Real>(
    source_spec: &ModelSpec,
    target_spec: &ModelSpec,
    plan: &TransferPlan,
    source: &LabeledDataset,
    target: &LabeledDataset,
    target_test: &LabeledDataset,
) -> Result<Comparison<R>> {
    plan.validate()?;
    let cfg = &plan.target_config;
    let direct = train_from_scratch::<R>(target_spec, target, cfg)?.model;
    let lq_p = layerwise_pretrain_baseline::<R>(target_spec, target, cfg)?.model;
    let src: TrainOutput<R> = rap(
        source_spec,
        source,
        &plan.beta_prime,
        plan.k,
        plan.k_p,
        &plan.source_config,
    )?;
    let pre = src.pretrained.clone().expect("rap always pre-trains");
    let non_joint = t_arap_non_joint_from(target_spec, plan, pre, target)?.model;
    let (mut joint, _) = transfer_prefix(target_spec, &src.model, plan.k_p, target, cfg)?;
    annotate(&mut joint, plan, "t-arap")?;
    let mut table = TransferTable {
        source: plan.source.clone(),
        target: plan.target.clone(),
        beta_prime: plan.beta_prime.to_string(),
        rows: Vec::new(),
    };
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for (name, m) in [
        ("LQ_d", direct),
        ("LQ_p", lq_p),
        ("T-ARAP-non-joint", non_joint),
        ("T-ARAP", joint),
    ] {
        let r = evaluate(&m, target_test, cfg.threads)?;
        table.rows.push(TransferRow {
            method: name.into(),
            top1: r.top1,
            top5: r.top5,
        });
        reports.push(r);
        models.push((name.to_string(), m));
    }
    Ok(Comparison {
        table,
        source_model: src.model,
        pretrained: src.pretrained.expect("rap always pre-trains"),
        models,
        reports,
    })
}
