//! Weighted networks: initialization, layer export, forward and backward passes.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{LayerKind, ModelSpec, ParamShape};
use crate::error::{Error, Result};
use crate::nn::{
    conv2d_backward_grouped, conv2d_forward_grouped, dropout_backward, dropout_forward, fc_backward, fc_forward,
    maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, Mode,
};
use crate::rng::{stream, Purpose, Rng};
use crate::tensor::{Real, Tensor};

/// Where a set of weights came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Free-form stage label such as `init`, `submodel`, `rap`.
    pub stage: String,
    /// Optimizer iterations applied since initialization.
    pub iteration: u64,
    /// Hash of the checkpoint this one was derived from.
    pub parent: Option<String>,
    pub config_hash: Option<String>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<R = f64> {
    pub weights: Tensor<R>,
    pub bias: Tensor<R>,
}

impl<R: Real> LayerParams<R> {
    pub fn zeros_like(&self) -> Self {
        Self {
            weights: Tensor::zeros(self.weights.shape()),
            bias: Tensor::zeros(self.bias.shape()),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<S: Real>(&self) -> LayerParams<S> {
        LayerParams {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.weights.bit_eq(&other.weights) && self.bias.bit_eq(&other.bias)
    }
}

/// A model specification with one weight/bias pair per parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedModel<R = f64> {
    pub spec: ModelSpec,
    pub params: Vec<LayerParams<R>>,
    pub provenance: Provenance,
}

/// He-normal weights (std `sqrt(2 / fan_in)`) and zero biases. Parametric
/// layer `j` draws from stream `(seed, ModelInit, j)`.
pub fn init_weights<R: Real>(spec: &ModelSpec, seed: u64) -> Result<WeightedModel<R>> {
    WeightedModel::init(spec, seed, Purpose::ModelInit)
}

/// Copies the first `count` parametric layers of `src` into `dst`.
pub fn export_layers<R: Real>(
    src: &WeightedModel<R>,
    dst: &WeightedModel<R>,
    count: usize,
) -> Result<WeightedModel<R>> {
    let mut out = dst.clone();
    out.import_prefix(src, count)?;
    Ok(out)
}

/// Intermediate values kept by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<R> {
    /// Input of each layer.
    inputs: Vec<Tensor<R>>,
    aux: Vec<Aux<R>>,
    pub output: Tensor<R>,
}

#[derive(Debug, Clone)]
enum Aux<R> {
    None,
    Argmax(Vec<usize>),
    Mask(Tensor<R>),
}

impl<R: Real> Trace<R> {
    /// Activation entering layer `index`.
    pub fn input_of(&self, index: usize) -> &Tensor<R> {
        &self.inputs[index]
    }
}

impl<R: Real> WeightedModel<R> {
    /// Initializes every parametric layer from `(seed, purpose, j)`. Values
    /// are drawn at 64-bit and rounded, so both precisions start alike.
    pub fn init(spec: &ModelSpec, seed: u64, purpose: Purpose) -> Result<Self> {
        let params = spec
            .param_shapes()?
            .iter()
            .enumerate()
            .map(|(j, ps)| {
                let normal = Normal::new(0.0, (2.0 / ps.fan_in as f64).sqrt()).expect("positive std");
                let mut rng = stream(seed, purpose, j as u64);
                LayerParams {
                    weights: Tensor::from_fn(&ps.weights, |_| R::from_f64(normal.sample(&mut rng))),
                    bias: Tensor::zeros(&ps.bias),
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            params,
            provenance: Provenance {
                seed,
                stage: "init".into(),
                ..Provenance::default()
            },
        })
    }

    /// Wraps existing parameters after checking them against `spec`.
    pub fn from_parts(spec: ModelSpec, params: Vec<LayerParams<R>>, provenance: Provenance) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        check_params(&shapes, &params)?;
        Ok(Self {
            spec,
            params,
            provenance,
        })
    }

    pub fn cast<S: Real>(&self) -> WeightedModel<S> {
        WeightedModel {
            spec: self.spec.clone(),
            params: self.params.iter().map(LayerParams::cast).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(LayerParams::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.weights.is_finite() && p.bias.is_finite())
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.bit_eq(b))
    }

    /// Overwrites the first `count` parametric layers with bit copies from `src`.
    pub fn import_prefix(&mut self, src: &WeightedModel<R>, count: usize) -> Result<()> {
        if count > src.params.len() || count > self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot export {count} layers: source has {}, destination {}",
                src.params.len(),
                self.params.len()
            )));
        }
        for j in 0..count {
            let (a, b) = (&src.params[j], &self.params[j]);
            if a.weights.shape() != b.weights.shape() || a.bias.shape() != b.bias.shape() {
                return Err(Error::shape(
                    "export_layers",
                    format!(
                        "parametric layer {j}: source weights {:?} vs destination {:?}",
                        a.weights.shape(),
                        b.weights.shape()
                    ),
                ));
            }
        }
        self.params[..count].clone_from_slice(&src.params[..count]);
        Ok(())
    }

    /// Forward pass. `rng` is only consulted by dropout in training mode.
    pub fn forward(&self, input: &Tensor<R>, mode: Mode, rng: Option<&mut Rng>) -> Result<Tensor<R>> {
        self.run(input, 0..self.spec.layers.len(), mode, rng, false)
            .map(|t| t.output)
    }

    /// Deterministic evaluation-mode forward pass.
    pub fn predict(&self, input: &Tensor<R>) -> Result<Tensor<R>> {
        self.forward(input, Mode::Eval, None)
    }

    /// Evaluation-mode pass through the listed layers only, in order.
    pub fn forward_path(&self, input: &Tensor<R>, path: &[usize]) -> Result<Tensor<R>> {
        let mut x = input.clone();
        for &i in path {
            x = self.apply_layer(i, &x, Mode::Eval, None)?.0;
        }
        Ok(x)
    }

    /// Evaluation-mode pass through layers `range`.
    pub fn forward_range(&self, input: &Tensor<R>, range: std::ops::Range<usize>) -> Result<Tensor<R>> {
        self.run(input, range, Mode::Eval, None, false).map(|t| t.output)
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_trace(&self, input: &Tensor<R>, mode: Mode, rng: Option<&mut Rng>) -> Result<Trace<R>> {
        self.run(input, 0..self.spec.layers.len(), mode, rng, true)
    }

    fn run(
        &self,
        input: &Tensor<R>,
        range: std::ops::Range<usize>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        keep: bool,
    ) -> Result<Trace<R>> {
        if range.start == 0 && input.shape() != self.spec.input {
            return Err(Error::shape(
                "forward",
                format!(
                    "{} expects input {:?}, got {:?}",
                    self.spec.name,
                    self.spec.input,
                    input.shape()
                ),
            ));
        }
        let mut inputs = Vec::new();
        let mut aux = Vec::new();
        let mut x = input.clone();
        for i in range {
            let (y, a) = self.apply_layer(i, &x, mode, rng.as_deref_mut())?;
            if keep {
                inputs.push(std::mem::replace(&mut x, y));
                aux.push(a);
            } else {
                x = y;
            }
        }
        Ok(Trace { inputs, aux, output: x })
    }

    fn param_index(&self, layer: usize) -> usize {
        self.spec.layers[..layer].iter().filter(|l| l.is_parametric()).count()
    }

    fn apply_layer(&self, i: usize, x: &Tensor<R>, mode: Mode, rng: Option<&mut Rng>) -> Result<(Tensor<R>, Aux<R>)> {
        Ok(match &self.spec.layers[i] {
            LayerKind::Conv { groups, .. } => {
                let p = &self.params[self.param_index(i)];
                (conv2d_forward_grouped(x, &p.weights, &p.bias, *groups)?, Aux::None)
            }
            LayerKind::FullyConnected { .. } => {
                let p = &self.params[self.param_index(i)];
                (fc_forward(x, &p.weights, &p.bias)?, Aux::None)
            }
            LayerKind::Relu => (relu_forward(x), Aux::None),
            LayerKind::MaxPool2x2 => {
                let pooled = maxpool2x2_forward(x)?;
                (pooled.output, Aux::Argmax(pooled.argmax))
            }
            LayerKind::Dropout { rate } => {
                if mode == Mode::Eval || *rate == 0.0 {
                    (x.clone(), Aux::None)
                } else {
                    let rng = rng
                        .ok_or_else(|| Error::InvalidArgument("training-mode dropout needs a random stream".into()))?;
                    let (y, mask) = dropout_forward(x, *rate, mode, rng)?;
                    (y, Aux::Mask(mask))
                }
            }
        })
    }

    /// Gradients of all parameters given the gradient of the loss with respect
    /// to the trace output. Parametric layers below `frozen` get zero gradients
    /// and the pass stops as soon as nothing trainable remains below.
    pub fn backward(&self, trace: &Trace<R>, grad_out: &Tensor<R>, frozen: usize) -> Result<Vec<LayerParams<R>>> {
        if trace.inputs.len() != self.spec.layers.len() {
            return Err(Error::InvalidArgument("trace does not cover the whole network".into()));
        }
        let mut grads: Vec<LayerParams<R>> = self.params.iter().map(LayerParams::zeros_like).collect();
        let param_layers = self.spec.param_layer_indices();
        let Some(&lowest) = param_layers.get(frozen) else {
            return Ok(grads);
        };
        let mut g = grad_out.clone();
        let mut pj = param_layers.len();
        for i in (lowest..self.spec.layers.len()).rev() {
            let x = &trace.inputs[i];
            let need_input = i > lowest;
            g = match &self.spec.layers[i] {
                LayerKind::Conv { groups, .. } => {
                    pj -= 1;
                    let cg = conv2d_backward_grouped(x, &self.params[pj].weights, &g, *groups, need_input)?;
                    grads[pj] = LayerParams {
                        weights: cg.weights,
                        bias: cg.bias,
                    };
                    cg.input
                }
                LayerKind::FullyConnected { .. } => {
                    pj -= 1;
                    let fg = fc_backward(x, &self.params[pj].weights, &g)?;
                    grads[pj] = LayerParams {
                        weights: fg.weights,
                        bias: fg.bias,
                    };
                    fg.input
                }
                LayerKind::Relu => relu_backward(x, &g)?,
                LayerKind::MaxPool2x2 => match &trace.aux[i] {
                    Aux::Argmax(idx) => maxpool2x2_backward(idx, x.shape(), &g)?,
                    _ => return Err(Error::InvalidArgument("trace lacks pooling indices".into())),
                },
                LayerKind::Dropout { .. } => match &trace.aux[i] {
                    Aux::Mask(mask) => dropout_backward(mask, &g)?,
                    _ => g,
                },
            };
        }
        Ok(grads)
    }

    /// Gradient with respect to the network input (no parameters frozen).
    pub fn input_gradient(&self, trace: &Trace<R>, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        let mut g = grad_out.clone();
        let mut pj = self.params.len();
        for i in (0..self.spec.layers.len()).rev() {
            let x = &trace.inputs[i];
            g = match &self.spec.layers[i] {
                LayerKind::Conv { groups, .. } => {
                    pj -= 1;
                    conv2d_backward_grouped(x, &self.params[pj].weights, &g, *groups, true)?.input
                }
                LayerKind::FullyConnected { .. } => {
                    pj -= 1;
                    fc_backward(x, &self.params[pj].weights, &g)?.input
                }
                LayerKind::Relu => relu_backward(x, &g)?,
                LayerKind::MaxPool2x2 => match &trace.aux[i] {
                    Aux::Argmax(idx) => maxpool2x2_backward(idx, x.shape(), &g)?,
                    _ => return Err(Error::InvalidArgument("trace lacks pooling indices".into())),
                },
                LayerKind::Dropout { .. } => match &trace.aux[i] {
                    Aux::Mask(mask) => dropout_backward(mask, &g)?,
                    _ => g,
                },
            };
        }
        Ok(g)
    }
}

fn check_params<R: Real>(shapes: &[ParamShape], params: &[LayerParams<R>]) -> Result<()> {
    if shapes.len() != params.len() {
        return Err(Error::shape(
            "model",
            format!(
                "spec has {} parametric layers, got {} tensors",
                shapes.len(),
                params.len()
            ),
        ));
    }
    for (j, (s, p)) in shapes.iter().zip(params).enumerate() {
        if p.weights.shape() != s.weights || p.bias.shape() != s.bias {
            return Err(Error::shape(
                "model",
                format!(
                    "parametric layer {j}: expected weights {:?} bias {:?}, got {:?} {:?}",
                    s.weights,
                    s.bias,
                    p.weights.shape(),
                    p.bias.shape()
                ),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_submodel;
    use crate::nn::{check_gradient_with, mse_loss, softmax_cross_entropy, GradCheck};

    fn flatten(params: &[LayerParams<f64>]) -> Vec<f64> {
        params
            .iter()
            .flat_map(|p| p.weights.data().iter().chain(p.bias.data()).copied())
            .collect()
    }

    fn unflatten(template: &[LayerParams<f64>], flat: &[f64]) -> Vec<LayerParams<f64>> {
        let mut off = 0;
        template
            .iter()
            .map(|p| {
                let w = Tensor::new(p.weights.shape().to_vec(), flat[off..off + p.weights.len()].to_vec()).unwrap();
                off += p.weights.len();
                let b = Tensor::new(p.bias.shape().to_vec(), flat[off..off + p.bias.len()].to_vec()).unwrap();
                off += p.bias.len();
                LayerParams { weights: w, bias: b }
            })
            .collect()
    }

    fn small_spec() -> ModelSpec {
        ModelSpec::classifier("small", [2, 6, 6], &[(3, 3), (4, 2), (2, 3)], &[5], 0.0).unwrap()
    }

    #[test]
    fn init_is_reproducible_and_shaped() {
        let spec = ModelSpec::cifar10();
        let a: WeightedModel = init_weights(&spec, 5).unwrap();
        let b: WeightedModel = init_weights(&spec, 5).unwrap();
        assert!(a.bit_eq(&b));
        assert_eq!(a.params[0].weights.shape(), &[64, 1, 9, 9]);
        let c: WeightedModel = init_weights(&spec, 6).unwrap();
        assert!(!a.bit_eq(&c));
        assert!(a.params.iter().all(|p| p.bias.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_std_matches_he() {
        let spec = ModelSpec::new("he", [32, 4, 4], vec![LayerKind::conv(64, 5)]).unwrap();
        let m: WeightedModel = init_weights(&spec, 11).unwrap();
        let w = m.params[0].weights.data();
        assert_eq!(m.params[0].weights.shape(), &[64, 32, 5, 5]);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (2.0f64 / 800.0).sqrt();
        assert!((std / target - 1.0).abs() < 0.05, "{std} vs {target}");
    }

    #[test]
    fn export_copies_prefix_only() {
        let spec = ModelSpec::cifar10();
        let sub = build_submodel(&spec, 3, 2, 1).unwrap();
        let ms: WeightedModel = WeightedModel::init(&sub.net, 1, Purpose::SubModelInit).unwrap();
        let m: WeightedModel = init_weights(&spec, 2).unwrap();
        assert!(export_layers(&ms, &m, 0).unwrap().bit_eq(&m));
        let out = export_layers(&ms, &m, 2).unwrap();
        assert!(out.params[0].bit_eq(&ms.params[0]) && out.params[1].bit_eq(&ms.params[1]));
        assert!(out.params[2].bit_eq(&m.params[2]) && out.params[3].bit_eq(&m.params[3]));
        // the tail conv has a different shape from conv3 of M
        assert!(export_layers(&ms, &m, 3).is_err());
    }

    #[test]
    fn exported_prefix_activations_match() {
        let spec = small_spec();
        let sub = build_submodel(&spec, 3, 2, 2).unwrap();
        let ms: WeightedModel = WeightedModel::init(&sub.net, 3, Purpose::SubModelInit).unwrap();
        let m = export_layers(&ms, &init_weights(&spec, 4).unwrap(), 2).unwrap();
        let x = Tensor::from_fn(&[2, 6, 6], |i| ((i * 37) % 17) as f64 / 17.0 - 0.4);
        let a = m.forward_path(&x, &spec.prefix_path(2).unwrap()).unwrap();
        let b = ms.forward_range(&x, 0..sub.tail_start()).unwrap();
        assert!(a.bit_eq(&b));
        // the same layers via the ordinary forward prefix
        assert!(m.forward_range(&x, 0..4).unwrap().bit_eq(&a));
    }

    #[test]
    fn logits_length_and_eval_determinism() {
        let spec = ModelSpec::classifier("d", [1, 8, 8], &[(2, 3)], &[6, 3], 0.5).unwrap();
        let m: WeightedModel = init_weights(&spec, 9).unwrap();
        let x = Tensor::from_fn(&[1, 8, 8], |i| i as f64 / 64.0);
        let a = m.predict(&x).unwrap();
        assert_eq!(a.shape(), &[3]);
        assert!(a.bit_eq(&m.predict(&x).unwrap()));
        assert!(m.forward(&x, Mode::Train, None).is_err());
    }

    fn network_gradcheck(spec: &ModelSpec, x: &Tensor<f64>, loss: impl Fn(&Tensor<f64>) -> (f64, Tensor<f64>)) -> f64 {
        let m: WeightedModel = init_weights(spec, 21).unwrap();
        let mut m = m;
        // nonzero biases so every term is exercised
        for (j, p) in m.params.iter_mut().enumerate() {
            p.bias = Tensor::from_fn(p.bias.shape(), |i| 0.05 * ((i + j) % 3) as f64);
        }
        let trace = m.forward_trace(x, Mode::Eval, None).unwrap();
        let (_, g) = loss(&trace.output);
        let grads = m.backward(&trace, &g, 0).unwrap();
        let flat = flatten(&m.params);
        // probes that flip a ReLU or pooling switch are excluded
        let pattern = |mm: &WeightedModel| -> Vec<bool> {
            let t = mm.forward_trace(x, Mode::Eval, None).unwrap();
            t.inputs
                .iter()
                .flat_map(|v| v.data().iter().map(|&a| a > 0.0).collect::<Vec<_>>())
                .collect()
        };
        let base = pattern(&m);
        let report = check_gradient_with(&flat, &flatten(&grads), GradCheck::default(), |p| {
            let mm = WeightedModel {
                params: unflatten(&m.params, p),
                ..m.clone()
            };
            if pattern(&mm) != base {
                return None;
            }
            Some(loss(&mm.predict(x).unwrap()).0)
        });
        assert!(report.checked > report.skipped * 10, "{report:?}");
        report.max_rel_error
    }

    #[test]
    fn three_conv_stack_matches_finite_differences() {
        let spec = small_spec();
        let x = Tensor::from_fn(&[2, 6, 6], |i| ((i * 53) % 29) as f64 / 29.0 - 0.3);
        let err = network_gradcheck(&spec, &x, |o| softmax_cross_entropy(o, 2).unwrap());
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn pooled_network_and_reconstruction_gradients() {
        let spec = ModelSpec::new(
            "pooled",
            [1, 6, 6],
            vec![
                LayerKind::conv(3, 3),
                LayerKind::Relu,
                LayerKind::MaxPool2x2,
                LayerKind::conv(2, 3),
                LayerKind::Relu,
                LayerKind::fc(3),
            ],
        )
        .unwrap();
        let x = Tensor::from_fn(&[1, 6, 6], |i| ((i * 31) % 23) as f64 / 23.0);
        assert!(network_gradcheck(&spec, &x, |o| softmax_cross_entropy(o, 0).unwrap()) < 1e-6);

        let sub = build_submodel(&small_spec(), 3, 2, 2).unwrap();
        let x = Tensor::from_fn(&[2, 6, 6], |i| ((i * 7) % 13) as f64 / 13.0);
        let target = Tensor::from_fn(&[2, 6, 6], |i| ((i * 5) % 11) as f64 / 11.0);
        assert!(network_gradcheck(&sub.net, &x, |o| mse_loss(o, &target).unwrap()) < 1e-6);
    }

    #[test]
    fn frozen_layers_get_zero_gradients() {
        let spec = small_spec();
        let m: WeightedModel = init_weights(&spec, 8).unwrap();
        let x = Tensor::from_fn(&[2, 6, 6], |i| (i % 7) as f64 / 7.0);
        let t = m.forward_trace(&x, Mode::Eval, None).unwrap();
        let (_, g) = softmax_cross_entropy(&t.output, 1).unwrap();
        let full = m.backward(&t, &g, 0).unwrap();
        let part = m.backward(&t, &g, 2).unwrap();
        assert!(part[0].weights.data().iter().all(|&v| v == 0.0));
        assert!(part[1].bias.data().iter().all(|&v| v == 0.0));
        assert!(part[2].bit_eq(&full[2]) && part[3].bit_eq(&full[3]));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn exported_prefix_matches_on_any_input(seed in 0u64..10_000, k_p in 1usize..3) {
            let spec = ModelSpec::desk().adapted([1, 8, 8], 4).unwrap();
            let sub = build_submodel(&spec, 3, k_p, 1).unwrap();
            let ms: WeightedModel = WeightedModel::init(&sub.net, seed, Purpose::SubModelInit).unwrap();
            let m = export_layers(&ms, &init_weights(&spec, seed + 1).unwrap(), k_p).unwrap();
            let x = Tensor::from_fn(&[1, 8, 8], |i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0);
            let a = m.forward_path(&x, &spec.prefix_path(k_p).unwrap()).unwrap();
            let b = ms.forward_range(&x, 0..sub.tail_start()).unwrap();
            proptest::prop_assert!(a.bit_eq(&b));
        }
    }
}
