//! Top-k classification accuracy.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::WeightedModel;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub total: usize,
    pub top1: usize,
    pub top5: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalProvenance {
    pub checkpoint: Option<String>,
    pub dataset: String,
    pub degrade: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percent.
    pub top1: f64,
    /// Percent; `k` is clipped to the number of classes.
    pub top5: f64,
    pub samples: usize,
    pub per_class: Vec<ClassCount>,
    pub provenance: EvalProvenance,
}

/// Position of `label` when classes are sorted by descending score, ties
/// going to the lower class index.
pub fn rank_of(scores: &[f64], label: usize) -> usize {
    let s = scores[label];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < label))
        .count()
}

pub fn topk_hit(scores: &[f64], label: usize, k: usize) -> bool {
    rank_of(scores, label) < k
}

/// Builds a report from per-sample score rows.
pub fn report_from_scores(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<EvalReport> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} score rows for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let k5 = 5.min(classes);
    let mut per_class = vec![ClassCount::default(); classes];
    for (row, &label) in scores.iter().zip(labels) {
        if row.len() != classes || label >= classes {
            return Err(Error::Data(format!(
                "score row of {} for {classes} classes, label {label}",
                row.len()
            )));
        }
        let rank = rank_of(row, label);
        let c = &mut per_class[label];
        c.total += 1;
        c.top1 += usize::from(rank < 1);
        c.top5 += usize::from(rank < k5);
    }
    let n = labels.len();
    let pct = |hits: usize| if n == 0 { 0.0 } else { 100.0 * hits as f64 / n as f64 };
    Ok(EvalReport {
        top1: pct(per_class.iter().map(|c| c.top1).sum()),
        top5: pct(per_class.iter().map(|c| c.top5).sum()),
        samples: n,
        per_class,
        provenance: EvalProvenance::default(),
    })
}

/// Evaluation-mode logits for every input, computed on `threads` workers.
/// Each row depends only on its own input, so the result is thread-count
/// independent.
pub fn predict_all<R: Real>(model: &WeightedModel<R>, inputs: &[Tensor<R>], threads: usize) -> Result<Vec<Vec<f64>>> {
    let one = |x: &Tensor<R>| -> Result<Vec<f64>> { Ok(model.predict(x)?.data().iter().map(|v| v.as_f64()).collect()) };
    if threads <= 1 || inputs.len() < 2 {
        return inputs.iter().map(one).collect();
    }
    let chunk = inputs.len().div_ceil(threads);
    let parts: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(one).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut rows = Vec::with_capacity(inputs.len());
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}

pub fn evaluate<R: Real>(model: &WeightedModel<R>, data: &LabeledDataset, threads: usize) -> Result<EvalReport> {
    let classes = model
        .spec
        .classes()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a classifier", model.spec.name)))?;
    if classes != data.classes {
        return Err(Error::Data(format!(
            "model predicts {classes} classes but {} has {}",
            data.name, data.classes
        )));
    }
    let scores = predict_all(model, &data.network_inputs::<R>(), threads)?;
    let mut report = report_from_scores(&scores, &data.labels, classes)?;
    report.provenance = EvalProvenance {
        checkpoint: model.provenance.parent.clone(),
        dataset: format!("{}/{}", data.name, data.split.as_str()),
        degrade: data.degrade.clone(),
    };
    Ok(report)
}
