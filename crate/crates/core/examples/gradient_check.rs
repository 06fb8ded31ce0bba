//! Finite-difference check of every layer of the desk network, run in 64-bit
//! on a shrunken input so the whole parameter vector can be probed.

use advtrain::network::{init_weights, LayerKind, LayerParams, ModelSpec, WeightedModel};
use advtrain::nn::{check_gradient_with, maxpool2x2_forward, softmax_cross_entropy, GradCheck, Mode};
use advtrain::Tensor;

fn flatten(params: &[LayerParams<f64>]) -> Vec<f64> {
    params
        .iter()
        .flat_map(|p| p.weights.data().iter().chain(p.bias.data()).copied())
        .collect()
}

fn with_flat(model: &WeightedModel, flat: &[f64]) -> WeightedModel {
    let mut m = model.clone();
    let mut off = 0;
    for p in &mut m.params {
        for v in p.weights.data_mut().iter_mut().chain(p.bias.data_mut().iter_mut()) {
            *v = flat[off];
            off += 1;
        }
    }
    m
}

fn main() -> advtrain::Result<()> {
    let spec = ModelSpec::desk().adapted([1, 8, 8], 4)?;
    let model: WeightedModel = init_weights(&spec, 3)?;
    let x = Tensor::from_fn(&[1, 8, 8], |i| ((i * 37) % 23) as f64 / 23.0);
    let label = 2;

    let trace = model.forward_trace(&x, Mode::Eval, None)?;
    let (loss, g) = softmax_cross_entropy(&trace.output, label)?;
    let grads = model.backward(&trace, &g, 0)?;

    // a probe that flips a ReLU or pooling switch is not differentiable there
    let switches = |m: &WeightedModel| -> Vec<usize> {
        let t = m.forward_trace(&x, Mode::Eval, None).expect("forward");
        let mut s = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let input = t.input_of(i);
            match layer {
                LayerKind::Relu => s.extend(input.data().iter().map(|&a| usize::from(a > 0.0))),
                LayerKind::MaxPool2x2 => s.extend(maxpool2x2_forward(input).expect("pool").argmax),
                _ => {}
            }
        }
        s
    };
    let base = switches(&model);
    let report = check_gradient_with(&flatten(&model.params), &flatten(&grads), GradCheck::default(), |p| {
        let m = with_flat(&model, p);
        (switches(&m) == base).then(|| softmax_cross_entropy(&m.predict(&x).unwrap(), label).unwrap().0)
    });
    println!("loss {loss:.6}, {} parameters", model.param_count());
    println!(
        "checked {}  skipped {}  max relative error {:.2e}  max absolute error {:.2e}",
        report.checked, report.skipped, report.max_rel_error, report.max_abs_error
    );
    Ok(())
}
