//! Mini-batch momentum SGD over one model and one objective.
//!
//! Sample `b` of iteration `t` is position `t * B + b` of an endless stream of
//! per-epoch permutations. Per-sample gradients are summed in batch order, so
//! the threaded path returns exactly the sequential result.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{sgd_step, TrainConfig};
use crate::error::{Error, Result};
use crate::network::{LayerParams, WeightedModel};
use crate::nn::{mse_loss, softmax_cross_entropy, Mode};
use crate::rng::{mix64, stream2, Purpose};
use crate::tensor::{Real, Tensor};

pub enum Objective<'a, R> {
    /// Cross-entropy against class labels.
    Classify(&'a [usize]),
    /// Mean squared error against target images.
    Reconstruct(&'a [Tensor<R>]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieTarget {
    Weights,
    Bias,
}

/// Gradient tying: the tensor of parametric layer `param` is cut into
/// `groups` equal blocks along `axis`, and every block receives the mean of
/// the blocks' gradients. Blocks that start equal therefore stay equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tie {
    pub param: usize,
    pub target: TieTarget,
    pub axis: usize,
    pub groups: usize,
}

pub struct Stage<'a, R> {
    pub name: &'a str,
    pub inputs: &'a [Tensor<R>],
    pub objective: Objective<'a, R>,
    pub iterations: usize,
    /// Base learning rate per parametric layer; `None` freezes the layer.
    pub lrs: Vec<Option<f64>>,
    pub shuffle: Purpose,
    /// Separates the random streams of stages that share a purpose.
    pub salt: u64,
    pub ties: &'a [Tie],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub stage: String,
    pub split: String,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top5: Option<f64>,
    pub lr: f64,
    pub wall_time: f64,
}

impl MetricRecord {
    /// Same record with the timing field cleared, for reproducibility checks.
    pub fn without_time(&self) -> Self {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    /// Mean batch loss of every iteration.
    pub losses: Vec<f64>,
    pub records: Vec<MetricRecord>,
}

impl StageReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

fn check_stage<R: Real>(model: &WeightedModel<R>, stage: &Stage<R>) -> Result<()> {
    let n = stage.inputs.len();
    if n == 0 && stage.iterations > 0 {
        return Err(Error::Data(format!("{}: no training samples", stage.name)));
    }
    let targets = match &stage.objective {
        Objective::Classify(l) => l.len(),
        Objective::Reconstruct(t) => t.len(),
    };
    if targets != n {
        return Err(Error::Data(format!("{}: {n} inputs but {targets} targets", stage.name)));
    }
    if stage.lrs.len() != model.params.len() {
        return Err(Error::InvalidArgument(format!(
            "{}: {} learning rates for {} parametric layers",
            stage.name,
            stage.lrs.len(),
            model.params.len()
        )));
    }
    for t in stage.ties {
        let p = model
            .params
            .get(t.param)
            .ok_or_else(|| Error::InvalidArgument(format!("tie refers to missing layer {}", t.param)))?;
        let shape = match t.target {
            TieTarget::Weights => p.weights.shape(),
            TieTarget::Bias => p.bias.shape(),
        };
        if t.groups == 0 || t.axis >= shape.len() || shape[t.axis] % t.groups != 0 {
            return Err(Error::InvalidArgument(format!(
                "tie {t:?} does not divide tensor {shape:?}"
            )));
        }
    }
    Ok(())
}

struct Sampler {
    seed: u64,
    purpose: Purpose,
    salt: u64,
    n: usize,
    cached: Option<(usize, Vec<usize>)>,
}

impl Sampler {
    fn index(&mut self, position: usize) -> usize {
        let epoch = position / self.n;
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            perm.shuffle(&mut stream2(self.seed, self.purpose, self.salt, epoch as u64));
            self.cached = Some((epoch, perm));
        }
        self.cached.as_ref().expect("just filled").1[position % self.n]
    }
}

fn sample_gradient<R: Real>(
    model: &WeightedModel<R>,
    stage: &Stage<R>,
    index: usize,
    frozen: usize,
    mut rng: crate::rng::Rng,
) -> Result<(f64, Vec<LayerParams<R>>)> {
    let trace = model.forward_trace(&stage.inputs[index], Mode::Train, Some(&mut rng))?;
    let (loss, grad) = match &stage.objective {
        Objective::Classify(labels) => softmax_cross_entropy(&trace.output, labels[index])?,
        Objective::Reconstruct(targets) => mse_loss(&trace.output, &targets[index])?,
    };
    Ok((loss.as_f64(), model.backward(&trace, &grad, frozen)?))
}

fn apply_ties<R: Real>(grads: &mut [LayerParams<R>], ties: &[Tie]) {
    for t in ties {
        let tensor = match t.target {
            TieTarget::Weights => &mut grads[t.param].weights,
            TieTarget::Bias => &mut grads[t.param].bias,
        };
        let shape = tensor.shape().to_vec();
        let outer: usize = shape[..t.axis].iter().product();
        let inner: usize = shape[t.axis + 1..].iter().product();
        let block = shape[t.axis] / t.groups * inner;
        let stride = shape[t.axis] * inner;
        let scale = R::from_f64(1.0 / t.groups as f64);
        let data = tensor.data_mut();
        for o in 0..outer {
            let base = o * stride;
            for e in 0..block {
                let mut sum = R::zero();
                for g in 0..t.groups {
                    sum += data[base + g * block + e];
                }
                let mean = sum * scale;
                for g in 0..t.groups {
                    data[base + g * block + e] = mean;
                }
            }
        }
    }
}

/// Runs `stage.iterations` optimizer steps on `model` in place.
pub fn run_stage<R: Real>(model: &mut WeightedModel<R>, stage: &Stage<R>, cfg: &TrainConfig) -> Result<StageReport> {
    cfg.validate()?;
    check_stage(model, stage)?;
    let frozen = stage.lrs.iter().take_while(|l| l.is_none()).count();
    let mut velocity: Vec<LayerParams<R>> = model.params.iter().map(LayerParams::zeros_like).collect();
    let mut sampler = Sampler {
        seed: cfg.seed,
        purpose: stage.shuffle,
        salt: stage.salt,
        n: stage.inputs.len().max(1),
        cached: None,
    };
    let batch = cfg.batch_size;
    let start = Instant::now();
    let mut report = StageReport {
        name: stage.name.to_string(),
        ..StageReport::default()
    };
    let inv_batch = R::from_f64(1.0 / batch as f64);
    let momentum = R::from_f64(cfg.momentum);
    let mut acc: Vec<LayerParams<R>> = velocity.clone();

    for it in 0..stage.iterations {
        let indices: Vec<usize> = (0..batch).map(|b| sampler.index(it * batch + b)).collect();
        let rng_for = |b: usize| {
            stream2(
                cfg.seed,
                Purpose::Dropout,
                mix64(stage.salt).wrapping_add(it as u64),
                b as u64,
            )
        };
        acc.iter_mut().for_each(|p| {
            p.weights.fill(R::zero());
            p.bias.fill(R::zero());
        });
        let mut loss_sum = 0.0;
        let mut add = |loss: f64, g: Vec<LayerParams<R>>, acc: &mut Vec<LayerParams<R>>| -> Result<()> {
            loss_sum += loss;
            for (a, g) in acc.iter_mut().zip(&g).skip(frozen) {
                a.weights.add_assign(&g.weights)?;
                a.bias.add_assign(&g.bias)?;
            }
            Ok(())
        };
        if cfg.threads <= 1 || batch == 1 {
            for (b, &idx) in indices.iter().enumerate() {
                let (loss, g) = sample_gradient(model, stage, idx, frozen, rng_for(b))?;
                add(loss, g, &mut acc)?;
            }
        } else {
            let chunk = batch.div_ceil(cfg.threads);
            let shared: &WeightedModel<R> = model;
            let results: Vec<Result<Vec<(f64, Vec<LayerParams<R>>)>>> = std::thread::scope(|s| {
                let handles: Vec<_> = indices
                    .chunks(chunk)
                    .enumerate()
                    .map(|(c, idxs)| {
                        let rng_for = &rng_for;
                        s.spawn(move || {
                            idxs.iter()
                                .enumerate()
                                .map(|(o, &idx)| sample_gradient(shared, stage, idx, frozen, rng_for(c * chunk + o)))
                                .collect::<Result<Vec<_>>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            });
            for part in results {
                for (loss, g) in part? {
                    add(loss, g, &mut acc)?;
                }
            }
        }
        let loss = loss_sum / batch as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                stage: stage.name.to_string(),
                iteration: it,
                detail: format!("batch loss is {loss}"),
            });
        }
        report.losses.push(loss);
        for a in acc.iter_mut().skip(frozen) {
            a.weights.scale(inv_batch);
            a.bias.scale(inv_batch);
        }
        apply_ties(&mut acc, stage.ties);
        let mut last_lr = 0.0;
        for (j, base) in stage.lrs.iter().enumerate() {
            let Some(base) = base else { continue };
            let lr = cfg.lr(*base, it);
            last_lr = lr;
            let lr_r = R::from_f64(lr);
            let (p, v, g) = (&mut model.params[j], &mut velocity[j], &acc[j]);
            sgd_step(
                p.weights.data_mut(),
                g.weights.data(),
                v.weights.data_mut(),
                lr_r,
                momentum,
            );
            sgd_step(p.bias.data_mut(), g.bias.data(), v.bias.data_mut(), lr_r, momentum);
        }
        if cfg.log_every > 0 && ((it + 1) % cfg.log_every == 0 || it + 1 == stage.iterations) {
            report.records.push(MetricRecord {
                iteration: it + 1,
                stage: stage.name.to_string(),
                split: "train".into(),
                loss,
                top1: None,
                top5: None,
                lr: last_lr,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    }
    if !model.is_finite() {
        return Err(Error::Divergence {
            stage: stage.name.to_string(),
            iteration: stage.iterations,
            detail: "non-finite weights".into(),
        });
    }
    model.provenance.iteration += stage.iterations as u64;
    Ok(report)
}

/// Learning rates for joint tuning: `prefix` for the first `k_p` layers and
/// `rest` for the others.
pub fn grouped_lrs(layers: usize, k_p: usize, prefix: Option<f64>, rest: f64) -> Vec<Option<f64>> {
    (0..layers).map(|j| if j < k_p { prefix } else { Some(rest) }).collect()
}
