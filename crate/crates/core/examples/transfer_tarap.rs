//! Transfer from clean four-shape images to a degraded target task with a
//! different shape mix: direct training, layer-wise pre-training, T-ARAP
//! from the untuned sub-model, and T-ARAP.
//!
//!     cargo run --release --example transfer_tarap

use advtrain::data::{synth_shapes, Split, SynthParams};
use advtrain::degrade::DegradeSpec;
use advtrain::desk;
use advtrain::rng::Purpose;
use advtrain::training::TrainConfig;
use advtrain::transfer::{compare_transfer, TransferPlan};

fn main() -> advtrain::Result<()> {
    let alpha: DegradeSpec = "saltpepper:0.5".parse()?;
    let beta_prime: DegradeSpec = "saltpepper:0.6".parse()?;
    let (source, _) = desk::datasets()?;
    // the target task: four other shapes, few labels, noisy
    let target_params = SynthParams {
        classes: 8,
        ..desk::synth_params()
    };
    let pick = |d: advtrain::data::LabeledDataset, n: usize| -> advtrain::Result<_> {
        let keep: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] >= 4).take(n).collect();
        let images = advtrain::Tensor::from_fn(&[keep.len(), 1, 32, 32], |j| {
            d.images.data()[keep[j / 1024] * 1024 + j % 1024]
        });
        advtrain::data::LabeledDataset::new(
            "shapes-b",
            d.split,
            images,
            keep.iter().map(|&i| d.labels[i] - 4).collect(),
            4,
        )
    };
    let target =
        pick(synth_shapes(&target_params, 1600, 2, Split::Train)?, 200)?.degraded(&alpha, 1, Purpose::TrainDegrade)?;
    let target_test =
        pick(synth_shapes(&target_params, 800, 2, Split::Test)?, 400)?.degraded(&alpha, 1, Purpose::TestDegrade)?;

    let spec = desk::model_spec();
    let plan = TransferPlan {
        source: "shapes-a".into(),
        target: "shapes-b".into(),
        beta_prime,
        believed_alpha: Some(alpha),
        k: desk::K,
        k_p: desk::K_P,
        source_config: TrainConfig {
            tune_iterations: 1000,
            ..desk::train_config(1)
        },
        target_config: TrainConfig {
            tune_iterations: 1000,
            pretrain_iterations: 1000,
            ..desk::train_config(1)
        },
    };
    let cmp = compare_transfer::<f32>(&spec, &spec, &plan, &source, &target, &target_test)?;
    println!("{}", cmp.table);
    Ok(())
}
